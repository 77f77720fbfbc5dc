//! Scalar dilation equations, drift-constraint checks and layer chaining.

use crate::error::{Result, VzError};
use crate::model::{mod_4pi, CaseTag, DilationRecord, PieceDilation, VirtualZProgram};
use crate::sampled::{solve_monotone, wrap_symmetric, Phase, SampledFunction, Unit};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const FOUR_PI: f64 = 4.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub dfdtau_cap: f64,
    /// Minimum number of tau nodes.
    pub min_nodes: usize,
    /// Largest phase change per tau step (rad).
    pub max_phase_step: f64,
    /// General case: the two candidate dilations must agree to this fraction of T.
    pub general_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dfdtau_cap: 100.0,
            min_nodes: 8193,
            max_phase_step: 0.01,
            general_tol: 1e-8,
        }
    }
}

/// s_i phi_i + s_j phi_j.
#[derive(Clone, Debug)]
pub struct PhaseCombo<'a> {
    pub si: f64,
    pub sj: f64,
    pub phi_i: &'a Phase,
    pub phi_j: &'a Phase,
}

impl PhaseCombo<'_> {
    pub fn eval(&self, t: f64) -> f64 {
        let mut v = 0.0;
        if self.si != 0.0 {
            v += self.si * self.phi_i.eval_clamped(t);
        }
        if self.sj != 0.0 {
            v += self.sj * self.phi_j.eval_clamped(t);
        }
        v
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let mut v = 0.0;
        if self.si != 0.0 {
            v += self.si * self.phi_i.deriv_clamped(t);
        }
        if self.sj != 0.0 {
            v += self.sj * self.phi_j.deriv_clamped(t);
        }
        v
    }

    /// Common domain of the participating phases (None when both are analytic).
    pub fn domain(&self) -> Option<(f64, f64)> {
        let mut dom: Option<(f64, f64)> = None;
        for (s, p) in [(self.si, self.phi_i), (self.sj, self.phi_j)] {
            if s == 0.0 {
                continue;
            }
            if let Some((a, b)) = p.domain() {
                dom = Some(match dom {
                    None => (a, b),
                    Some((c, d)) => (a.max(c), b.min(d)),
                });
            }
        }
        dom
    }

    /// Solve psi(tau) = y.
    pub fn invert(&self, y: f64) -> Result<f64> {
        match self.domain() {
            None => {
                let rate = self.deriv(0.0);
                if rate == 0.0 {
                    return Err(VzError::DegenerateFrequencies(
                        "phase combination has zero rate; the dilation equation is singular".into(),
                    ));
                }
                Ok((y - self.eval(0.0)) / rate)
            }
            Some((lo, hi)) => {
                let (ylo, yhi) = (self.eval(lo), self.eval(hi));
                let inc = yhi > ylo;
                let (ymin, ymax) = if inc { (ylo, yhi) } else { (yhi, ylo) };
                let slack = 1e-12 * (ymax - ymin).abs().max(1.0);
                if y < ymin - slack || y > ymax + slack {
                    // Linear extrapolation from the nearer end gives the needed extent.
                    let (te, ye) = if (y - ylo).abs() < (y - yhi).abs() { (lo, ylo) } else { (hi, yhi) };
                    let d = self.deriv(te);
                    let need = if d != 0.0 { te + (y - ye) / d } else { f64::NAN };
                    return Err(VzError::DomainExhausted {
                        need_lo: need.min(lo),
                        need_hi: need.max(hi),
                        have_lo: lo,
                        have_hi: hi,
                    });
                }
                Ok(solve_monotone(|t| self.eval(t), |t| self.deriv(t), y, lo, hi, inc, 1e-15 * (hi - lo)))
            }
        }
    }
}

/// One scalar dilation problem on the desired span [a, b] of original time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationProblem {
    pub case: CaseTag,
    pub phi_i: Phase,
    pub phi_j: Phase,
    /// Accumulated virtual phases V_i, V_j (rad), defined on at least [a, b].
    pub big_v_i: SampledFunction,
    pub big_v_j: SampledFunction,
    #[serde(default)]
    pub branch: i64,
    pub span: (f64, f64),
}

/// f(tau) = tau for Z-only couplings, otherwise g^{-1}(psi(tau)) with g = psi + W + 4 pi m.
pub fn solve_dilation(p: &DilationProblem, opts: &SolveOptions) -> Result<DilationRecord> {
    let (a, b) = p.span;
    if !(b > a) {
        return Err(VzError::Validation("dilation span is empty".into()));
    }
    for (name, v) in [("V_i", &p.big_v_i), ("V_j", &p.big_v_j)] {
        if !(v.contains(a) && v.contains(b)) {
            let (c, d) = v.domain();
            return Err(VzError::Domain(format!("{name} spans [{c}, {d}], needs [{a}, {b}]")));
        }
    }
    match p.case {
        CaseTag::ZOnly => DilationRecord::identity(a, b, opts.min_nodes, CaseTag::ZOnly),
        CaseTag::General => {
            let ri = solve_combination(p, 1.0, 0.0, opts)?;
            let rj = solve_combination(p, 0.0, 1.0, opts)?;
            let tol = opts.general_tol * (b - a);
            let d0 = (ri.tau0() - rj.tau0()).abs().max((ri.tau1() - rj.tau1()).abs());
            if d0 > tol {
                return Err(VzError::NoSolution(format!(
                    "per-qubit dilations disagree on their tau range by {d0:.3e} s"
                )));
            }
            let mut worst: f64 = 0.0;
            for t in ri.f.times() {
                let t = t.clamp(rj.tau0(), rj.tau1());
                worst = worst.max((ri.f.eval_clamped(t) - rj.f.eval_clamped(t)).abs());
            }
            if worst > tol {
                return Err(VzError::NoSolution(format!(
                    "per-qubit dilations differ by up to {worst:.3e} s"
                )));
            }
            Ok(DilationRecord {
                case: CaseTag::General,
                residual: ri.residual.max(rj.residual),
                ..ri
            })
        }
        case => {
            let (si, sj) = case.combination().expect("case with a phase combination");
            solve_combination(p, si, sj, opts)
        }
    }
}

fn solve_combination(p: &DilationProblem, si: f64, sj: f64, opts: &SolveOptions) -> Result<DilationRecord> {
    let (a, b) = p.span;
    let psi = PhaseCombo {
        si,
        sj,
        phi_i: &p.phi_i,
        phi_j: &p.phi_j,
    };
    let shift = FOUR_PI * p.branch as f64;
    let big_w = |t: f64| {
        let mut v = shift + psi.eval(t);
        if si != 0.0 {
            v += si * p.big_v_i.eval_clamped(t);
        }
        if sj != 0.0 {
            v += sj * p.big_v_j.eval_clamped(t);
        }
        v
    };
    let dg = |t: f64| {
        let mut v = psi.deriv(t);
        if si != 0.0 {
            v += si * p.big_v_i.deriv_clamped(t);
        }
        if sj != 0.0 {
            v += sj * p.big_v_j.deriv_clamped(t);
        }
        v
    };

    // Strict monotonicity of g on [a, b], checked on a grid finer than the V samples.
    let nodes_in_span = ((b - a) / p.big_v_i.dt().min(p.big_v_j.dt())).ceil() as usize;
    let ncheck = (2 * nodes_in_span).clamp(4096, 1 << 20);
    let s0 = dg(a).signum();
    if s0 == 0.0 {
        return Err(VzError::NonMonotone(format!("g' vanishes at t = {a:.6e}")));
    }
    let mut prev = big_w(a);
    for k in 1..=ncheck {
        let t = a + (b - a) * k as f64 / ncheck as f64;
        let d = dg(t);
        let g = big_w(t);
        if d.signum() != s0 || (g - prev).signum() != s0 {
            return Err(VzError::NonMonotone(format!(
                "psi + W is not strictly monotone near t = {t:.6e} (turning point: df/dtau diverges)"
            )));
        }
        prev = g;
    }
    let inc = s0 > 0.0;
    let (y0, y1) = (big_w(a), big_w(b));
    let tau0 = psi.invert(y0)?;
    let tau1 = psi.invert(y1)?;
    if !(tau1 > tau0) {
        return Err(VzError::NonMonotone(
            "frame phase and virtual phase run in opposite directions; f would reverse time".into(),
        ));
    }
    let steps_phase = ((y1 - y0).abs() / opts.max_phase_step).ceil() as usize;
    let n = (opts.min_nodes.max(2) - 1).max(steps_phase).max(nodes_in_span) + 1;
    let dtau = (tau1 - tau0) / (n - 1) as f64;
    let xtol = 1e-13 * (b - a);

    let mut fs = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for k in 0..n {
        let tau = if k == n - 1 { tau1 } else { tau0 + k as f64 * dtau };
        let f = if k == 0 {
            a
        } else if k == n - 1 {
            b
        } else {
            solve_monotone(&big_w, &dg, psi.eval(tau), a, b, inc, xtol)
        };
        let slope = psi.deriv(tau) / dg(f);
        if !(slope > 0.0) || slope > opts.dfdtau_cap || !slope.is_finite() {
            return Err(VzError::NonMonotone(format!(
                "df/dtau = {slope:.4e} at tau = {tau:.6e} exceeds the cap {} or is not positive",
                opts.dfdtau_cap
            )));
        }
        fs.push(f);
        slopes.push(slope);
    }
    let f = SampledFunction::hermite(tau0, dtau, fs, slopes.clone(), Unit::Seconds)?;
    let dfdtau = SampledFunction::new(tau0, dtau, slopes, Unit::Dimensionless)?;

    let mut residual: f64 = 0.0;
    for k in 0..n {
        let tau = f.time(k);
        residual = residual.max(wrap_symmetric(psi.eval(tau) - big_w(f.samples()[k]), FOUR_PI).abs());
        if k + 1 < n {
            let tm = tau + 0.5 * dtau;
            residual = residual.max(wrap_symmetric(psi.eval(tm) - big_w(f.eval_clamped(tm)), FOUR_PI).abs());
        }
    }
    Ok(DilationRecord {
        f,
        dfdtau,
        branch: p.branch,
        case: p.case,
        residual,
    })
}

/// Residual of the defining equation psi(tau) = psi(f) + W(f) + 4 pi m (mod 4 pi) at nodes and midpoints.
pub fn composition_residual(
    rec: &DilationRecord,
    phi_i: &Phase,
    phi_j: &Phase,
    big_v_i: &SampledFunction,
    big_v_j: &SampledFunction,
) -> f64 {
    let combos: Vec<(f64, f64)> = match rec.case {
        CaseTag::ZOnly => return 0.0,
        CaseTag::General => vec![(1.0, 0.0), (0.0, 1.0)],
        c => vec![c.combination().expect("phase combination")],
    };
    let mut worst: f64 = 0.0;
    for (si, sj) in combos {
        let psi = PhaseCombo { si, sj, phi_i, phi_j };
        let g = |t: f64| psi.eval(t) + si * big_v_i.eval_clamped(t) + sj * big_v_j.eval_clamped(t);
        let n = rec.f.len();
        for k in 0..(2 * n - 1) {
            let tau = rec.tau0() + 0.5 * k as f64 * rec.f.dt();
            let r = psi.eval(tau) - g(rec.f.eval_clamped(tau)) - FOUR_PI * rec.branch as f64;
            worst = worst.max(wrap_symmetric(r, FOUR_PI).abs());
        }
    }
    worst
}

/// Largest relative gap between the stored df/dtau and a fourth-order centred difference of f's nodes.
pub fn derivative_consistency(rec: &DilationRecord) -> f64 {
    let y = rec.f.samples();
    let h = rec.f.dt();
    let d = rec.dfdtau.samples();
    let mut worst: f64 = 0.0;
    for k in 2..y.len().saturating_sub(2) {
        let d1 = (y[k + 1] - y[k - 1]) / (2.0 * h);
        let d2 = (y[k + 2] - y[k - 2]) / (4.0 * h);
        let fd = (4.0 * d1 - d2) / 3.0;
        worst = worst.max((fd - d[k]).abs() / d[k].abs());
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// max |rz(tau) - f'(tau) rz(f(tau))| over the tau nodes.
    pub max_violation: f64,
    pub feasible: bool,
    /// Tau spans where the drift vanishes, so the inverse of its phase gains extra branches there.
    pub zero_spans: Vec<(f64, f64)>,
    /// Nodes skipped because rz was not sampled at tau or f(tau).
    pub skipped: usize,
}

pub fn check_drift_constraint(rec: &DilationRecord, rz: &SampledFunction) -> DriftReport {
    let scale = rz.max_abs();
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut zero_spans = vec![];
    let mut zero_start: Option<f64> = None;
    let mut last_tau = rec.tau0();
    for (k, tau) in rec.f.times().enumerate() {
        let f = rec.f.samples()[k];
        if !(rz.contains(tau) && rz.contains(f)) {
            skipped += 1;
            continue;
        }
        let here = rz.eval_clamped(tau);
        let v = (here - rec.dfdtau.samples()[k] * rz.eval_clamped(f)).abs();
        worst = worst.max(v);
        if here.abs() <= 1e-15 * scale.max(f64::MIN_POSITIVE) || here == 0.0 {
            zero_start.get_or_insert(tau);
        } else if let Some(s) = zero_start.take() {
            zero_spans.push((s, last_tau));
        }
        last_tau = tau;
    }
    if let Some(s) = zero_start {
        zero_spans.push((s, last_tau));
    }
    DriftReport {
        max_violation: worst,
        feasible: worst <= tol,
        zero_spans,
        skipped,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub i: usize,
    pub j: usize,
    pub case: CaseTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub span: (f64, f64),
    pub pairs: Vec<PairPlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub solve: SolveOptions,
    pub branch: i64,
    pub max_branch_bumps: usize,
    pub max_fixed_point_iters: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            solve: SolveOptions::default(),
            branch: 0,
            max_branch_bumps: 64,
            max_fixed_point_iters: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub pieces: Vec<Vec<PieceDilation>>,
    /// Per layer and qubit, the constant c with W = V + c used for that layer.
    pub layer_offsets: Vec<Vec<f64>>,
    /// Per qubit, compiled-time gaps between its pieces (including lead-in and tail).
    pub idle: Vec<Vec<(f64, f64)>>,
    /// Final virtual phase per qubit, not reduced.
    pub residual_raw: Vec<f64>,
    pub span: (f64, f64),
    pub fixed_point_iters: usize,
}

impl ChainResult {
    pub fn residual_mod(&self) -> Vec<f64> {
        self.residual_raw.iter().map(|x| mod_4pi(*x)).collect()
    }

    /// Piece of `layer` that contains qubit `k`.
    pub fn piece_of(&self, layer: usize, k: usize) -> Option<&PieceDilation> {
        self.pieces[layer].iter().find(|p| p.qubits.contains(&k))
    }
}

/// Validate pairwise disjointness of every layer.
pub fn check_layers(n: usize, layers: &[LayerPlan]) -> Result<()> {
    for (li, l) in layers.iter().enumerate() {
        let mut seen = vec![false; n];
        for p in &l.pairs {
            if p.i == p.j || p.i >= n || p.j >= n {
                return Err(VzError::Validation(format!("bad pair ({}, {}) in layer {li}", p.i, p.j)));
            }
            for q in [p.i, p.j] {
                if seen[q] {
                    return Err(VzError::InconsistentLayer { layer: li, qubit: q });
                }
                seen[q] = true;
            }
        }
    }
    Ok(())
}

/// Solve every pair of every layer, place pieces on the compiled time axis and fold idle drift
/// phase into the next layer's offsets. Pair pieces are anchored by the frame phases; pieces of
/// solo qubits and Z-only pairs are pure shifts placed as soon as their qubits are free.
pub fn chain_layers(
    n: usize,
    layers: &[LayerPlan],
    frames: &[Phase],
    program: &VirtualZProgram,
    idle_drift: &[f64],
    opts: &ChainOptions,
) -> Result<ChainResult> {
    check_layers(n, layers)?;
    if frames.len() != n || program.n_qubits() != n {
        return Err(VzError::DimensionMismatch(frames.len().max(program.n_qubits()), n));
    }
    let acc: Vec<SampledFunction> = (0..n).map(|k| program.accumulated(k)).collect();
    let drift: Vec<f64> = (0..n).map(|k| idle_drift.get(k).copied().unwrap_or(0.0)).collect();
    let has_drift = drift.iter().any(|d| *d != 0.0);
    let mut offsets = vec![vec![0.0; n]; layers.len()];
    // Branches only ever move forward between passes, so the iteration cannot flip between them.
    let mut branches: Vec<Vec<i64>> = layers.iter().map(|l| vec![opts.branch; l.pairs.len()]).collect();
    let mut iters = 0;
    loop {
        iters += 1;
        let pass = chain_pass(n, layers, frames, &acc, &offsets, &mut branches, opts)?;
        let (new_offsets, residual) = fold_idle(n, layers.len(), &pass, &acc, &drift);
        let change = offsets
            .iter()
            .flatten()
            .zip(new_offsets.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = 1.0 + new_offsets.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !has_drift || change <= 1e-13 * scale {
            return Ok(ChainResult {
                idle: pass.gaps,
                pieces: pass.pieces,
                layer_offsets: offsets,
                residual_raw: residual,
                span: pass.span,
                fixed_point_iters: iters,
            });
        }
        if iters >= opts.max_fixed_point_iters {
            return Err(VzError::FixedPointStall(format!(
                "idle-phase offsets still moving by {change:.3e} rad after {iters} passes"
            )));
        }
        offsets = new_offsets;
    }
}

struct Pass {
    pieces: Vec<Vec<PieceDilation>>,
    /// (start, end) of each qubit's piece per layer.
    windows: Vec<Vec<(f64, f64)>>,
    gaps: Vec<Vec<(f64, f64)>>,
    span: (f64, f64),
}

fn chain_pass(
    n: usize,
    layers: &[LayerPlan],
    frames: &[Phase],
    acc: &[SampledFunction],
    offsets: &[Vec<f64>],
    branches: &mut [Vec<i64>],
    opts: &ChainOptions,
) -> Result<Pass> {
    let mut prev_end: Vec<Option<f64>> = vec![None; n];
    let mut tau_start = f64::INFINITY;
    let mut pieces = Vec::with_capacity(layers.len());
    let mut windows = vec![vec![(0.0, 0.0); n]; layers.len()];
    let t_scale = layers.last().map(|l| l.span.1).unwrap_or(1.0) - layers.first().map(|l| l.span.0).unwrap_or(0.0);
    for (li, layer) in layers.iter().enumerate() {
        let (a, b) = layer.span;
        let mut lp: Vec<PieceDilation> = vec![];
        let mut covered = vec![false; n];
        for (pi, pair) in layer.pairs.iter().enumerate() {
            if pair.case == CaseTag::ZOnly {
                continue;
            }
            let (i, j) = (pair.i.min(pair.j), pair.i.max(pair.j));
            let need = match (prev_end[i], prev_end[j]) {
                (None, None) => None,
                (x, y) => Some(x.unwrap_or(f64::NEG_INFINITY).max(y.unwrap_or(f64::NEG_INFINITY))),
            };
            let mut m = branches[li][pi];
            let mut bumps = 0;
            let rec = loop {
                let prob = DilationProblem {
                    case: pair.case,
                    phi_i: frames[i].clone(),
                    phi_j: frames[j].clone(),
                    big_v_i: acc[i].offset(offsets[li][i]),
                    big_v_j: acc[j].offset(offsets[li][j]),
                    branch: m,
                    span: (a, b),
                };
                let rec = solve_dilation(&prob, &opts.solve)?;
                match need {
                    Some(t) if rec.tau0() < t - 1e-12 * t_scale => {
                        bumps += 1;
                        if bumps > opts.max_branch_bumps {
                            return Err(VzError::NoSolution(format!(
                                "pair ({i}, {j}) of layer {li} cannot start after its qubits are free"
                            )));
                        }
                        let (si, sj) = match pair.case {
                            CaseTag::General => (1.0, 0.0),
                            c => c.combination().expect("phase combination"),
                        };
                        let dir = (si * frames[i].deriv_clamped(rec.tau0()) + sj * frames[j].deriv_clamped(rec.tau0()))
                            .signum();
                        m += if dir >= 0.0 { 1 } else { -1 };
                    }
                    _ => break rec,
                }
            };
            branches[li][pi] = m;
            for q in [i, j] {
                covered[q] = true;
                windows[li][q] = (rec.tau0(), rec.tau1());
                prev_end[q] = Some(rec.tau1());
            }
            if li == 0 {
                tau_start = tau_start.min(rec.tau0());
            }
            lp.push(PieceDilation {
                qubits: vec![i, j],
                record: rec,
            });
        }
        if li == 0 {
            tau_start = tau_start.min(a);
        }
        let mut groups: Vec<(Vec<usize>, CaseTag)> = layer
            .pairs
            .iter()
            .filter(|p| p.case == CaseTag::ZOnly)
            .map(|p| (vec![p.i.min(p.j), p.i.max(p.j)], CaseTag::ZOnly))
            .collect();
        for g in &groups {
            for q in &g.0 {
                covered[*q] = true;
            }
        }
        for k in 0..n {
            if !covered[k] {
                groups.push((vec![k], CaseTag::ZOnly));
            }
        }
        for (qs, case) in groups {
            let start = qs
                .iter()
                .map(|q| prev_end[*q].unwrap_or(tau_start))
                .fold(f64::NEG_INFINITY, f64::max);
            let rec = DilationRecord::shift(a, b, start - a, opts.solve.min_nodes, case)?;
            for q in &qs {
                windows[li][*q] = (rec.tau0(), rec.tau1());
                prev_end[*q] = Some(rec.tau1());
            }
            lp.push(PieceDilation { qubits: qs, record: rec });
        }
        lp.sort_by_key(|p| p.qubits[0]);
        pieces.push(lp);
    }
    let tau_end = prev_end.iter().map(|e| e.unwrap_or(tau_start)).fold(f64::NEG_INFINITY, f64::max);
    let mut gaps = vec![vec![]; n];
    for k in 0..n {
        let mut cursor = tau_start;
        for w in windows.iter() {
            let (s, e) = w[k];
            if s > cursor {
                gaps[k].push((cursor, s));
            }
            cursor = e;
        }
        if tau_end > cursor {
            gaps[k].push((cursor, tau_end));
        }
    }
    Ok(Pass {
        pieces,
        windows,
        gaps,
        span: (tau_start, tau_end),
    })
}

fn fold_idle(
    n: usize,
    n_layers: usize,
    pass: &Pass,
    acc: &[SampledFunction],
    drift: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut offsets = vec![vec![0.0; n]; n_layers];
    let mut residual = vec![0.0; n];
    for k in 0..n {
        let mut cursor = pass.span.0;
        let mut idle = 0.0;
        for (li, w) in pass.windows.iter().enumerate() {
            idle += (w[k].0 - cursor).max(0.0);
            offsets[li][k] = -drift[k] * idle;
            cursor = w[k].1;
        }
        idle += (pass.span.1 - cursor).max(0.0);
        residual[k] = acc[k].samples().last().copied().unwrap_or(0.0) - drift[k] * idle;
    }
    (offsets, residual)
}
