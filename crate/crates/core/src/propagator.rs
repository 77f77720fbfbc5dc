//! Dense time-dependent propagation, Hamiltonian builders per platform and fidelity metrics.

use crate::classifier::{rwa_project, RwaLevel};
use crate::error::{Result, VzError};
use crate::linalg::{embed1, embed2, pauli, z_rotation, z_rotation_diag, CMat};
use crate::model::{CompiledSchedule, CouplingModel, DriveTopology, HardwareModel, PulseSchedule, VirtualZProgram};
use crate::sampled::{Phase, SampledFunction};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Envelope {
    Const(f64),
    /// Sampled envelope, zero outside `window`.
    Sampled { f: SampledFunction, window: (f64, f64) },
    Fn(ScalarFn),
}

impl Envelope {
    pub fn gated(f: &SampledFunction) -> Self {
        Envelope::Sampled {
            window: f.domain(),
            f: f.clone(),
        }
    }

    pub fn windowed(f: &SampledFunction, lo: f64, hi: f64) -> Self {
        Envelope::Sampled {
            f: f.clone(),
            window: (lo, hi),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Envelope::Const(c) => *c,
            Envelope::Sampled { f, window } => {
                if t < window.0 || t > window.1 {
                    0.0
                } else {
                    f.eval_clamped(t)
                }
            }
            Envelope::Fn(g) => g(t),
        }
    }
}

impl fmt::Debug for Envelope {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Const(c) => write!(fm, "Const({c})"),
            Envelope::Sampled { window, .. } => write!(fm, "Sampled{window:?}"),
            Envelope::Fn(_) => write!(fm, "Fn"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Term {
    pub op: CMat,
    pub env: Envelope,
    /// When set, the term contributes env(t) K(t)^dag op K(t) with K = exp(-i/2 sum phi_k Z_k).
    pub frame: Option<Arc<Vec<Phase>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameTag {
    Lab,
    Rotating,
}

#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    pub n_qubits: usize,
    pub terms: Vec<Term>,
    /// Times where envelopes may be discontinuous; steps never straddle them.
    pub breakpoints: Vec<f64>,
    pub frame: FrameTag,
    /// Fastest oscillation present (rad/s), used to bound the step.
    pub max_rate: f64,
}

impl TimeDependentHamiltonian {
    pub fn new(n_qubits: usize, frame: FrameTag) -> Self {
        TimeDependentHamiltonian {
            n_qubits,
            terms: vec![],
            breakpoints: vec![],
            frame,
            max_rate: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn push(&mut self, op: CMat, env: Envelope) {
        if let Envelope::Sampled { window, .. } = &env {
            self.breakpoints.push(window.0);
            self.breakpoints.push(window.1);
        }
        self.terms.push(Term { op, env, frame: None });
    }

    pub fn push_framed(&mut self, op: CMat, env: Envelope, frame: Arc<Vec<Phase>>) {
        if let Envelope::Sampled { window, .. } = &env {
            self.breakpoints.push(window.0);
            self.breakpoints.push(window.1);
        }
        self.terms.push(Term {
            op,
            env,
            frame: Some(frame),
        });
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.op.dim() != self.dim() {
                return Err(VzError::DimensionMismatch(t.op.dim(), self.dim()));
            }
            let e = t.op.hermiticity_error();
            if e > 1e-12 * t.op.frob_norm().max(1.0) {
                return Err(VzError::NonHermitian(e));
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> CMat {
        let d = self.dim();
        let mut h = CMat::zeros(d);
        for term in &self.terms {
            let c = term.env.eval(t);
            if c == 0.0 {
                continue;
            }
            match &term.frame {
                None => h.axpy(c, &term.op),
                Some(phases) => {
                    let th: Vec<f64> = phases.iter().map(|p| p.eval_clamped(t)).collect();
                    let k = z_rotation_diag(&th);
                    for r in 0..d {
                        for col in 0..d {
                            let v = term.op.get(r, col);
                            if v.re == 0.0 && v.im == 0.0 {
                                continue;
                            }
                            let cur = h.get(r, col);
                            h.set(r, col, cur + k[r].conj() * v * k[col] * c);
                        }
                    }
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    /// Minimum midpoint steps per breakpoint segment.
    pub min_steps: usize,
    /// Steps per period of the fastest oscillation.
    pub samples_per_period: f64,
    /// Richardson estimate of the propagator error (Frobenius) that must be met.
    pub tol: f64,
    pub max_refinements: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            min_steps: 64,
            samples_per_period: 40.0,
            tol: 1e-7,
            max_refinements: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub u: CMat,
    /// |U_2N - U_N| / 3 of the final refinement.
    pub richardson: f64,
    pub steps: usize,
    pub unitarity: f64,
}

fn midpoint_product(h: &TimeDependentHamiltonian, segments: &[(f64, f64, usize)], mult: usize) -> CMat {
    let mut u = CMat::identity(h.dim());
    for &(a, b, n) in segments {
        let n = n * mult;
        let dt = (b - a) / n as f64;
        for k in 0..n {
            let tm = a + (k as f64 + 0.5) * dt;
            let step = CMat::expm_hermitian_step(&h.at(tm), dt);
            u = &step * &u;
            // Truncation bias in expm otherwise grows the norm linearly with the step count.
            if k % 256 == 255 {
                u = u.reunitarize();
            }
        }
    }
    u
}

/// Time-ordered product of midpoint exponentials over [a, b] with step doubling until the
/// Richardson estimate meets the tolerance.
pub fn propagate(h: &TimeDependentHamiltonian, span: (f64, f64), policy: &StepPolicy) -> Result<Propagation> {
    h.validate()?;
    let (a, b) = span;
    if !(b >= a) {
        return Err(VzError::Validation("propagation span is reversed".into()));
    }
    if b == a {
        return Ok(Propagation {
            u: CMat::identity(h.dim()),
            richardson: 0.0,
            steps: 0,
            unitarity: 0.0,
        });
    }
    let mut cuts: Vec<f64> = h
        .breakpoints
        .iter()
        .copied()
        .filter(|t| *t > a && *t < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (b - a));
    let max_step = if h.max_rate > 0.0 {
        2.0 * PI / (h.max_rate * policy.samples_per_period)
    } else {
        f64::INFINITY
    };
    let total = b - a;
    let segments: Vec<(f64, f64, usize)> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let len = w[1] - w[0];
            let by_rate = (len / max_step).ceil() as usize;
            let by_share = ((policy.min_steps as f64) * len / total).ceil() as usize;
            (w[0], w[1], by_rate.max(by_share).max(1))
        })
        .collect();
    let mut mult = 1;
    let mut coarse = midpoint_product(h, &segments, mult);
    let mut estimate = f64::INFINITY;
    for _ in 0..=policy.max_refinements {
        let fine = midpoint_product(h, &segments, 2 * mult);
        estimate = (&fine - &coarse).frob_norm() / 3.0;
        if estimate <= policy.tol {
            let unitarity = fine.unitarity_error();
            if unitarity > 1e-10 {
                return Err(VzError::NotUnitary(unitarity));
            }
            let steps = segments.iter().map(|s| s.2).sum::<usize>() * 2 * mult;
            return Ok(Propagation {
                u: fine,
                richardson: estimate,
                steps,
                unitarity,
            });
        }
        coarse = fine;
        mult *= 2;
    }
    Err(VzError::StepTooCoarse {
        estimate,
        tol: policy.tol,
    })
}

/// 1 - |Tr(U^dag V)|^2 / d^2.
pub fn infidelity(u: &CMat, v: &CMat) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(VzError::DimensionMismatch(u.dim(), v.dim()));
    }
    let d = u.dim() as f64;
    let tr = (&u.adjoint() * v).trace();
    Ok((1.0 - tr.norm_sqr() / (d * d)).max(0.0))
}

/// Average-gate variant d/(d+1) of the trace infidelity.
pub fn average_gate_infidelity(u: &CMat, v: &CMat) -> Result<f64> {
    let d = u.dim() as f64;
    Ok(infidelity(u, v)? * d / (d + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildMode {
    /// Lab frame with explicit carriers and drift.
    Lab,
    /// Rotating frame, all carrier terms kept (interaction picture of the frame).
    RotatingExact,
    /// Rotating frame after the rotating-wave approximation.
    RotatingRwa,
}

/// Extra options for [`build_hamiltonian`].
#[derive(Clone, Debug, Default)]
pub struct BuildExtras<'a> {
    /// Frames to use instead of the model's (flux schedules carry their own).
    pub frames: Option<Vec<Phase>>,
    /// Add 1/2 v_k Z_k from this program (effective Hamiltonian).
    pub program: Option<&'a VirtualZProgram>,
}

fn rwa_level(model: &HardwareModel) -> RwaLevel {
    match model {
        HardwareModel::DirectXY { .. } => RwaLevel::None,
        _ => RwaLevel::DropCPlus,
    }
}

/// Frames of a flux schedule: phi_k = integral of the qubit frequency, concatenated over layers.
pub fn flux_frames(schedule: &PulseSchedule) -> Result<Vec<Phase>> {
    if schedule.layers.len() != 1 {
        return Err(VzError::UnsupportedCombination(
            "flux-tunable schedules are supported with a single layer".into(),
        ));
    }
    let l = &schedule.layers[0];
    (0..schedule.n_qubits)
        .map(|k| {
            let w = l
                .freqs
                .get(&k)
                .ok_or_else(|| VzError::Validation(format!("flux schedule lacks a frequency for qubit {k}")))?;
            Ok(Phase::Sampled {
                f: crate::sampled::accumulate_phase(w, 0.0),
            })
        })
        .collect()
}

pub fn model_frames(model: &HardwareModel, schedule: &PulseSchedule) -> Result<Vec<Phase>> {
    match model.frames() {
        Some(f) => Ok(f),
        None => flux_frames(schedule),
    }
}

fn carrier_sign(model: &HardwareModel) -> f64 {
    // Carrier phase = sign * frame phase.
    match model {
        HardwareModel::SpinQubit { .. } | HardwareModel::CrossResonance { .. } => -1.0,
        _ => 1.0,
    }
}

/// Assemble the Hamiltonian of `schedule` on `model` in the requested frame.
pub fn build_hamiltonian(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    mode: BuildMode,
    extras: &BuildExtras,
) -> Result<TimeDependentHamiltonian> {
    model.validate()?;
    let n = model.n_qubits();
    if schedule.n_qubits != n {
        return Err(VzError::DimensionMismatch(schedule.n_qubits, n));
    }
    let frames = match &extras.frames {
        Some(f) => f.clone(),
        None => model_frames(model, schedule)?,
    };
    let frames = Arc::new(frames);
    let frame_tag = if mode == BuildMode::Lab { FrameTag::Lab } else { FrameTag::Rotating };
    let mut h = TimeDependentHamiltonian::new(n, frame_tag);
    let x = pauli::x();
    let y = pauli::y();
    let z = pauli::z();

    if let HardwareModel::DirectXY { idle_drift, .. } = model {
        if mode != BuildMode::RotatingRwa && mode != BuildMode::RotatingExact {
            return Err(VzError::UnsupportedCombination("direct-XY test model is defined in its rotating frame only".into()));
        }
        for layer in &schedule.layers {
            for (k, d) in &layer.drives {
                h.push(embed1(n, *k, &x).scale_re(0.5), Envelope::gated(&d.i));
                h.push(embed1(n, *k, &y).scale_re(0.5), Envelope::gated(&d.q));
            }
            for (k, r) in &layer.rz {
                h.push(embed1(n, *k, &z).scale_re(0.5), Envelope::gated(r));
            }
            for p in &layer.pairs {
                let op = embed2(n, p.i.min(p.j), p.i.max(p.j), model.coupling_op(p.i, p.j)?.matrix());
                h.push_framed(op, Envelope::gated(&p.coupling), frames.clone());
            }
        }
        for (k, d) in idle_drift.iter().enumerate() {
            if *d != 0.0 {
                h.push(embed1(n, k, &z).scale_re(0.5), Envelope::Const(*d));
            }
        }
        h.max_rate = max_frame_rate(&frames, schedule);
        add_program(&mut h, extras, n);
        return Ok(h);
    }

    let csign = carrier_sign(model);
    let level = rwa_level(model);
    let rate = max_frame_rate(&frames, schedule);
    h.max_rate = match mode {
        BuildMode::RotatingRwa => rate_spread(&frames, schedule),
        _ => 2.0 * rate,
    };

    // Couplings.
    for layer in &schedule.layers {
        for p in &layer.pairs {
            let (i, j) = (p.i.min(p.j), p.i.max(p.j));
            let lab_op = model.coupling_op(i, j)?;
            let op = match mode {
                BuildMode::RotatingRwa => rwa_project(&lab_op, level)?,
                _ => lab_op,
            };
            let full = embed2(n, i, j, op.matrix());
            let env = match model {
                HardwareModel::FluxTunable { coupling_model, g, .. } => {
                    let wi = layer.freqs.get(&i).cloned();
                    let wj = layer.freqs.get(&j).cloned();
                    let (wi, wj) = match (wi, wj) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return Err(VzError::Validation("flux pair lacks frequency trajectories".into())),
                    };
                    let (cm, g) = (*coupling_model, *g);
                    let (lo, hi) = (layer.start.max(wi.t0()), layer.end.min(wi.t_end()));
                    Envelope::Fn(Arc::new(move |t| {
                        if t < lo || t > hi {
                            0.0
                        } else {
                            g * cm.shape(wi.eval_clamped(t), wj.eval_clamped(t))
                        }
                    }))
                }
                _ => Envelope::gated(&p.coupling),
            };
            if let Envelope::Fn(_) = env {
                h.breakpoints.push(layer.start);
                h.breakpoints.push(layer.end);
            }
            match mode {
                BuildMode::Lab => h.push(full, env),
                _ => h.push_framed(full, env, frames.clone()),
            }
        }
    }

    // Drives.
    match model {
        HardwareModel::SpinQubit { mu, topology, .. } | HardwareModel::TunableCoupler { mu, topology, .. } => {
            let spin = matches!(model, HardwareModel::SpinQubit { .. });
            let (p_op, p_sign) = if spin { (&x, -1.0) } else { (&y, 1.0) };
            for layer in &schedule.layers {
                for (k, d) in &layer.drives {
                    let k = *k;
                    match mode {
                        BuildMode::RotatingRwa => {
                            // Resonant part: spin -mu/2 (I X + Q Y); tunable coupler mu/2 (I Y + Q X).
                            let (oi, oq) = if spin { (&x, &y) } else { (&y, &x) };
                            let c = 0.5 * p_sign * mu[k];
                            h.push(embed1(n, k, oi).scale_re(c), Envelope::gated(&d.i));
                            h.push(embed1(n, k, oq).scale_re(c), Envelope::gated(&d.q));
                        }
                        _ => {
                            let omega = carrier_envelope(&d.i, &d.q, frames[k].clone(), csign, mu[k]);
                            let targets: Vec<usize> = match topology {
                                DriveTopology::Local => vec![k],
                                DriveTopology::Global => (0..n).collect(),
                            };
                            for q in targets {
                                let op = embed1(n, q, p_op).scale_re(p_sign);
                                if mode == BuildMode::Lab {
                                    h.push(op, omega.clone());
                                } else {
                                    h.push_framed(op, omega.clone(), frames.clone());
                                }
                            }
                            h.breakpoints.push(d.i.t0());
                            h.breakpoints.push(d.i.t_end());
                        }
                    }
                }
            }
        }
        HardwareModel::FluxTunable { mu, .. } => {
            for layer in &schedule.layers {
                for (k, d) in &layer.drives {
                    let k = *k;
                    match mode {
                        BuildMode::RotatingRwa => {
                            let c = 0.5 * mu[k];
                            h.push(embed1(n, k, &y).scale_re(c), Envelope::gated(&d.i));
                            h.push(embed1(n, k, &x).scale_re(c), Envelope::gated(&d.q));
                        }
                        _ => {
                            let omega = carrier_envelope(&d.i, &d.q, frames[k].clone(), 1.0, mu[k]);
                            let op = embed1(n, k, &y);
                            if mode == BuildMode::Lab {
                                h.push(op, omega);
                            } else {
                                h.push_framed(op, omega, frames.clone());
                            }
                            h.breakpoints.push(d.i.t0());
                            h.breakpoints.push(d.i.t_end());
                        }
                    }
                }
            }
        }
        HardwareModel::CrossResonance { nu, mu_cr, .. } => {
            for layer in &schedule.layers {
                let mut drives: Vec<(usize, usize, &SampledFunction, &SampledFunction)> =
                    layer.drives.iter().map(|(k, d)| (*k, *k, &d.i, &d.q)).collect();
                for c in &layer.cr {
                    drives.push((c.control, c.target, &c.i, &c.q));
                }
                for (c, t, di, dq) in drives {
                    match mode {
                        BuildMode::RotatingRwa => {
                            // 1/2 (I X_t + Q Y_t)(nu_ct + mu_ct Z_c)
                            let xt = embed1(n, t, &x);
                            let yt = embed1(n, t, &y);
                            let zc = embed1(n, c, &z);
                            let mut ox = xt.scale_re(nu[c][t]);
                            ox.axpy(mu_cr[c][t], &(&zc * &xt));
                            let mut oy = yt.scale_re(nu[c][t]);
                            oy.axpy(mu_cr[c][t], &(&zc * &yt));
                            h.push(ox.scale_re(0.5), Envelope::gated(di));
                            h.push(oy.scale_re(0.5), Envelope::gated(dq));
                        }
                        _ => {
                            // Omega_c(t) sum_j [nu_cj X_j + mu_cj Z_c X_j], carrier at the target frequency.
                            let omega = carrier_envelope(di, dq, frames[t].clone(), csign, 1.0);
                            let zc = embed1(n, c, &z);
                            let mut op = CMat::zeros(1 << n);
                            for j in 0..n {
                                let xj = embed1(n, j, &x);
                                op.axpy(nu[c][j], &xj);
                                op.axpy(mu_cr[c][j], &(&zc * &xj));
                            }
                            if mode == BuildMode::Lab {
                                h.push(op, omega);
                            } else {
                                h.push_framed(op, omega, frames.clone());
                            }
                            h.breakpoints.push(di.t0());
                            h.breakpoints.push(di.t_end());
                        }
                    }
                }
            }
        }
        HardwareModel::DirectXY { .. } => unreachable!(),
    }

    if mode == BuildMode::Lab {
        for k in 0..n {
            let ph = frames[k].clone();
            h.push(embed1(n, k, &z).scale_re(0.5), Envelope::Fn(Arc::new(move |t| ph.deriv_clamped(t))));
        }
    }
    add_program(&mut h, extras, n);
    Ok(h)
}

fn add_program(h: &mut TimeDependentHamiltonian, extras: &BuildExtras, n: usize) {
    if let Some(p) = extras.program {
        for k in 0..n {
            if !p.v[k].is_zero() {
                h.push(embed1(n, k, &pauli::z()).scale_re(0.5), Envelope::gated(&p.v[k]));
            }
        }
    }
}

/// mu [I cos(theta) + Q sin(theta)] with theta = sign * phi, zero outside the envelope domain.
fn carrier_envelope(i: &SampledFunction, q: &SampledFunction, phi: Phase, sign: f64, mu: f64) -> Envelope {
    let (i, q) = (i.clone(), q.clone());
    let (lo, hi) = (i.t0().max(q.t0()), i.t_end().min(q.t_end()));
    Envelope::Fn(Arc::new(move |t| {
        if t < lo || t > hi {
            return 0.0;
        }
        let th = sign * phi.eval_clamped(t);
        mu * (i.eval_clamped(t) * th.cos() + q.eval_clamped(t) * th.sin())
    }))
}

fn schedule_span(schedule: &PulseSchedule) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for l in &schedule.layers {
        lo = lo.min(l.start);
        hi = hi.max(l.end);
    }
    (lo, hi)
}

fn max_frame_rate(frames: &[Phase], schedule: &PulseSchedule) -> f64 {
    let (a, b) = schedule_span(schedule);
    frames
        .iter()
        .map(|p| match p {
            Phase::Linear { rate, .. } => rate.abs(),
            Phase::Sampled { f } => {
                let (lo, hi) = f.domain();
                let (lo, hi) = (lo.max(a), hi.min(b));
                (0..=64)
                    .map(|k| f.deriv_clamped(lo + (hi - lo) * k as f64 / 64.0).abs())
                    .fold(0.0, f64::max)
            }
        })
        .fold(0.0, f64::max)
}

/// Largest frame-rate difference, the fastest rotation left after the RWA.
fn rate_spread(frames: &[Phase], schedule: &PulseSchedule) -> f64 {
    let (a, b) = schedule_span(schedule);
    let mid = 0.5 * (a + b);
    let rates: Vec<f64> = frames.iter().map(|p| p.deriv_clamped(mid)).collect();
    let mut m: f64 = 0.0;
    for x in &rates {
        for y in &rates {
            m = m.max((x - y).abs());
        }
    }
    m
}

/// exp(-i/2 sum theta_k Z_k).
pub fn virtual_frame(thetas: &[f64]) -> CMat {
    z_rotation(thetas)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub rwa_policy: StepPolicy,
    pub lab_policy: StepPolicy,
    /// Run the carrier-resolved check as well.
    pub lab: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            rwa_policy: StepPolicy {
                min_steps: 2048,
                samples_per_period: 40.0,
                tol: 1e-7,
                max_refinements: 10,
            },
            lab_policy: StepPolicy {
                min_steps: 2048,
                samples_per_period: 40.0,
                tol: 3e-7,
                max_refinements: 8,
            },
            lab: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// RWA compiled evolution followed by R(T) against the RWA effective evolution.
    pub infidelity_rwa_oracle: f64,
    /// Carrier-resolved compiled evolution against the RWA effective target.
    pub infidelity_lab: Option<f64>,
    /// Carrier-resolved compiled evolution against the carrier-resolved effective evolution.
    pub infidelity_lab_exact_target: Option<f64>,
    pub avg_gate_infidelity_rwa_oracle: f64,
    pub avg_gate_infidelity_lab: Option<f64>,
    pub richardson_rwa: f64,
    pub richardson_lab: Option<f64>,
    pub steps_lab: Option<usize>,
    pub metric: String,
}

/// Unitaries needed to compare a compiled schedule with its effective target.
pub struct Comparison {
    /// U_eff(T, 0) R(0)
    pub target: CMat,
    /// R(T) U_compiled
    pub compiled: CMat,
}

fn offsets_frame(program: &VirtualZProgram) -> CMat {
    let v0: Vec<f64> = (0..program.n_qubits()).map(|k| program.offset(k)).collect();
    virtual_frame(&v0)
}

/// Target and compiled evolutions in their own rotating frames. Schedules compiled into other
/// frames (flux) carry them in `compiled.frames`; the comparison needs no alignment because those
/// frames coincide with the model frames at the schedule start up to the offsets in R(0).
pub fn compare(
    model: &HardwareModel,
    program: &VirtualZProgram,
    schedule: &PulseSchedule,
    compiled: &CompiledSchedule,
    target_mode: BuildMode,
    compiled_mode: BuildMode,
    target_policy: &StepPolicy,
    compiled_policy: &StepPolicy,
) -> Result<(Comparison, Propagation, Propagation)> {
    let frames0 = model_frames(model, schedule)?;
    let ht = build_hamiltonian(
        model,
        schedule,
        target_mode,
        &BuildExtras {
            frames: Some(frames0.clone()),
            program: Some(program),
        },
    )?;
    let span = schedule.span();
    let pt = propagate(&ht, span, target_policy)?;
    let target = &pt.u * &offsets_frame(program);

    let cframes = match &compiled.frames {
        Some(f) => f.clone(),
        None => frames0.clone(),
    };
    let hc = build_hamiltonian(
        model,
        &compiled.schedule,
        compiled_mode,
        &BuildExtras {
            frames: Some(cframes.clone()),
            program: None,
        },
    )?;
    let cspan = compiled.schedule.span();
    let pc = propagate(&hc, cspan, compiled_policy)?;
    let compiled_u = &virtual_frame(&compiled.residual_z) * &pc.u;
    Ok((Comparison { target, compiled: compiled_u }, pt, pc))
}

pub fn verify_compilation(
    model: &HardwareModel,
    program: &VirtualZProgram,
    schedule: &PulseSchedule,
    compiled: &CompiledSchedule,
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    let (c, pt, _) = compare(
        model,
        program,
        schedule,
        compiled,
        BuildMode::RotatingRwa,
        BuildMode::RotatingRwa,
        &opts.rwa_policy,
        &opts.rwa_policy,
    )?;
    let rwa = infidelity(&c.target, &c.compiled)?;
    let rwa_avg = average_gate_infidelity(&c.target, &c.compiled)?;
    let mut report = VerifyReport {
        infidelity_rwa_oracle: rwa,
        infidelity_lab: None,
        infidelity_lab_exact_target: None,
        avg_gate_infidelity_rwa_oracle: rwa_avg,
        avg_gate_infidelity_lab: None,
        richardson_rwa: pt.richardson,
        richardson_lab: None,
        steps_lab: None,
        metric: "1 - |Tr(U^dag V)|^2 / d^2".into(),
    };
    if opts.lab && !matches!(model, HardwareModel::DirectXY { .. }) {
        let (lab, _, pc) = compare(
            model,
            program,
            schedule,
            compiled,
            BuildMode::RotatingRwa,
            BuildMode::RotatingExact,
            &opts.rwa_policy,
            &opts.lab_policy,
        )?;
        report.infidelity_lab = Some(infidelity(&lab.target, &lab.compiled)?);
        report.avg_gate_infidelity_lab = Some(average_gate_infidelity(&lab.target, &lab.compiled)?);
        report.richardson_lab = Some(pc.richardson);
        report.steps_lab = Some(pc.steps);
        let (exact, _, _) = compare(
            model,
            program,
            schedule,
            compiled,
            BuildMode::RotatingExact,
            BuildMode::RotatingExact,
            &opts.lab_policy,
            &opts.lab_policy,
        )?;
        report.infidelity_lab_exact_target = Some(infidelity(&exact.target, &exact.compiled)?);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares fit of log(infidelity) against log(|amplitude|), skipping non-positive entries.
pub fn fit_power_law(table: &[(f64, f64)]) -> Result<SweepFit> {
    let pts: Vec<(f64, f64)> = table
        .iter()
        .filter(|(a, y)| a.abs() > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(a, y)| (a.abs().ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(VzError::NotEnoughPoints);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    if sxx == 0.0 {
        return Err(VzError::NotEnoughPoints);
    }
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let slope = sxy / sxx;
    Ok(SweepFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

/// Evaluate `case(amplitude)` for every amplitude and fit the power law.
pub fn infidelity_sweep(
    amplitudes: &[f64],
    case: impl Fn(f64) -> Result<f64>,
) -> Result<(Vec<(f64, f64)>, SweepFit)> {
    let mut table = Vec::with_capacity(amplitudes.len());
    for a in amplitudes {
        table.push((*a, case(*a)?));
    }
    let fit = fit_power_law(&table)?;
    Ok((table, fit))
}

/// Coupling strength of a flux pair for frequencies (w_i, w_j).
pub fn flux_coupling(model: &CouplingModel, g: f64, wi: f64, wj: f64) -> f64 {
    g * model.shape(wi, wj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::sampled::{simpson, Unit};

    fn one_qubit() -> TimeDependentHamiltonian {
        TimeDependentHamiltonian::new(1, FrameTag::Rotating)
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = one_qubit();
        let p = propagate(&h, (0.0, 3.0), &StepPolicy::default()).unwrap();
        assert!((&p.u - &CMat::identity(2)).frob_norm() < 1e-15);
    }

    #[test]
    fn constant_z_matches_closed_form() {
        let w = 2.3;
        let t = 1.7;
        let mut h = one_qubit();
        h.push(pauli::z().scale_re(0.5 * w), Envelope::Const(1.0));
        let p = propagate(&h, (0.0, t), &StepPolicy::default()).unwrap();
        let want = CMat::diag(&[C64::from_polar(1.0, -w * t / 2.0), C64::from_polar(1.0, w * t / 2.0)]);
        assert!((&p.u - &want).frob_norm() < 1e-12);
    }

    #[test]
    fn commuting_gaussian_drive_matches_integral() {
        let t = 2.0;
        let a = SampledFunction::from_fn(0.0, t, 4001, Unit::RadPerSec, |s| 3.0 * (-((s - 1.0) / 0.3).powi(2)).exp()).unwrap();
        let mut h = one_qubit();
        h.push(pauli::x().scale_re(0.5), Envelope::gated(&a));
        let p = propagate(&h, (0.0, t), &StepPolicy { tol: 1e-10, ..Default::default() }).unwrap();
        // Oracle: Simpson integral of the analytic envelope.
        let area = simpson(|s| 3.0 * (-((s - 1.0) / 0.3).powi(2)).exp(), 0.0, t, 20000);
        let th = area / 2.0;
        let want = CMat::from_rows(&[
            &[C64::new(th.cos(), 0.0), C64::new(0.0, -th.sin())],
            &[C64::new(0.0, -th.sin()), C64::new(th.cos(), 0.0)],
        ]);
        assert!((&p.u - &want).frob_norm() < 1e-6, "{}", (&p.u - &want).frob_norm());
    }

    #[test]
    fn infidelity_examples() {
        let u = CMat::identity(2);
        assert_eq!(infidelity(&u, &u).unwrap(), 0.0);
        let ph = u.scale(C64::from_polar(1.0, 0.7));
        assert!(infidelity(&u, &ph).unwrap() < 1e-15);
        assert!((infidelity(&u, &pauli::x()).unwrap() - 1.0).abs() < 1e-15);
        assert!(infidelity(&u, &CMat::identity(4)).is_err());
    }

    #[test]
    fn step_halving_is_second_order() {
        let mut h = one_qubit();
        h.push(pauli::x(), Envelope::Fn(Arc::new(|t: f64| (3.0 * t).sin())));
        h.push(pauli::z(), Envelope::Fn(Arc::new(|t: f64| t * t)));
        let segs = |n| vec![(0.0, 2.0, n)];
        let reference = midpoint_product(&h, &segs(1 << 14), 1);
        let e1 = (&midpoint_product(&h, &segs(100), 1) - &reference).frob_norm();
        let e2 = (&midpoint_product(&h, &segs(200), 1) - &reference).frob_norm();
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "observed order {order}");
    }

    #[test]
    fn power_law_fit_recovers_synthetic_slope() {
        let table: Vec<(f64, f64)> = (1..=10).map(|k| (0.1 * k as f64, 3e-6 * (0.1 * k as f64).powi(2))).collect();
        let fit = fit_power_law(&table).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-3);
        assert_eq!(fit_power_law(&[(0.0, 1e-9), (0.0, 2e-9)]).unwrap_err(), VzError::NotEnoughPoints);
    }
}
