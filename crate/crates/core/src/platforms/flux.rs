//! Flux-tunable qubits: new frequency trajectories, rotating-frame recursion and the polynomial
//! dilation optimiser.
//!
//! Compiled drives are expressed in the compiled qubits' own frames `phi'_k = int w'_k + V_k0`,
//! which makes the controls exact functions of `f`; [`solve_flux_frame`] additionally builds a
//! single frame shared by the original and compiled schedules.

use super::{pair_case, DriveMap};
use crate::error::{Result, VzError};
use crate::iq::{decompose_local, synthesize, IqOptions};
use crate::model::{
    mod_4pi, CaseTag, CompiledSchedule, CouplingModel, DilationRecord, HardwareModel, Layer, PairPulse,
    PieceDilation, PulseSchedule, Quadrature, VirtualZProgram,
};
use crate::optimize::{minimize, Method, MinimizeOptions, MinimizeResult};
use crate::sampled::{accumulate_phase, Phase, SampledFunction, Unit};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

const GHZ: f64 = 2.0 * PI * 1e9;
const NS: f64 = 1e-9;

/// f(tau) = t0 + T p((tau - t0)/T) with p(s) = s + a s^2 + b s^3 + sum_m c_m s^m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationPolynomial {
    pub t0: f64,
    pub t_span: f64,
    pub tau1: f64,
    /// c_4 .. c_M in the normalised variable.
    pub c: Vec<f64>,
    pub m: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: [f64; 3],
}

impl DilationPolynomial {
    pub fn new(t0: f64, t_span: f64, tau1: f64, c: Vec<f64>, lambda: [f64; 3]) -> Self {
        let r = (tau1 - t0) / t_span;
        let big_a: f64 = c.iter().enumerate().map(|(k, cm)| cm * r.powi(k as i32 + 4)).sum();
        let big_b: f64 = c
            .iter()
            .enumerate()
            .map(|(k, cm)| (k as f64 + 4.0) * cm * r.powi(k as i32 + 3))
            .sum();
        let a = (3.0 - 3.0 * big_a + r * (big_b - 3.0)) / (r * r);
        let b = (2.0 * big_a - r * (big_b - 2.0) - 2.0) / (r * r * r);
        DilationPolynomial {
            t0,
            t_span,
            tau1,
            m: c.len() + 3,
            c,
            a,
            b,
            lambda,
        }
    }

    pub fn identity(t0: f64, t_span: f64, m: usize) -> Self {
        Self::new(t0, t_span, t0 + t_span, vec![0.0; m.saturating_sub(3)], [1.0; 3])
    }

    fn p(&self, s: f64) -> (f64, f64) {
        let mut v = s + self.a * s * s + self.b * s * s * s;
        let mut d = 1.0 + 2.0 * self.a * s + 3.0 * self.b * s * s;
        for (k, cm) in self.c.iter().enumerate() {
            let m = k as i32 + 4;
            v += cm * s.powi(m);
            d += m as f64 * cm * s.powi(m - 1);
        }
        (v, d)
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.t0 + self.t_span * self.p((tau - self.t0) / self.t_span).0
    }

    pub fn deriv(&self, tau: f64) -> f64 {
        self.p((tau - self.t0) / self.t_span).1
    }

    pub fn to_record(&self, n: usize, case: CaseTag) -> Result<DilationRecord> {
        let n = n.max(2);
        let dt = (self.tau1 - self.t0) / (n - 1) as f64;
        let taus: Vec<f64> = (0..n).map(|k| self.t0 + k as f64 * dt).collect();
        let f: Vec<f64> = taus.iter().map(|t| self.eval(*t)).collect();
        let d: Vec<f64> = taus.iter().map(|t| self.deriv(*t)).collect();
        if let Some(k) = d.iter().position(|x| *x <= 0.0) {
            return Err(VzError::NonMonotone(format!("polynomial dilation has f' <= 0 at tau = {:.6e}", taus[k])));
        }
        Ok(DilationRecord {
            f: SampledFunction::hermite(self.t0, dt, f, d.clone(), Unit::Seconds)?,
            dfdtau: SampledFunction::new(self.t0, dt, d, Unit::Dimensionless)?,
            branch: 0,
            case,
            residual: 0.0,
        })
    }
}

/// Everything the flux solvers need about one coupled pair.
#[derive(Clone, Debug)]
pub struct FluxPair {
    pub i: usize,
    pub j: usize,
    pub case: CaseTag,
    pub w: [SampledFunction; 2],
    pub v: [SampledFunction; 2],
    pub big_v: [SampledFunction; 2],
    pub coupling_model: CouplingModel,
    pub g: f64,
    pub span: (f64, f64),
}

impl FluxPair {
    pub fn from_inputs(model: &HardwareModel, schedule: &PulseSchedule, program: &VirtualZProgram) -> Result<Self> {
        let HardwareModel::FluxTunable { coupling_model, g, .. } = model else {
            return Err(VzError::UnsupportedCombination(format!("flux compile on a {} model", model.tag())));
        };
        model.validate()?;
        schedule.validate()?;
        program.validate()?;
        if schedule.n_qubits != 2 || schedule.layers.len() != 1 || schedule.layers[0].pairs.len() != 1 {
            return Err(VzError::UnsupportedCombination(
                "flux-tunable compilation handles one coupled pair in a single layer".into(),
            ));
        }
        if program.n_qubits() != 2 {
            return Err(VzError::DimensionMismatch(program.n_qubits(), 2));
        }
        let l = &schedule.layers[0];
        let p = &l.pairs[0];
        let (i, j) = (p.i.min(p.j), p.i.max(p.j));
        let freq = |k: usize| {
            l.freqs
                .get(&k)
                .cloned()
                .ok_or_else(|| VzError::Validation(format!("missing frequency trajectory for qubit {k}")))
        };
        let case = pair_case(model, i, j)?;
        if case == CaseTag::General {
            return Err(VzError::UnsupportedCombination("general coupling on flux-tunable qubits".into()));
        }
        Ok(FluxPair {
            i,
            j,
            case,
            w: [freq(i)?, freq(j)?],
            v: [program.v[i].clone(), program.v[j].clone()],
            big_v: [program.accumulated(i), program.accumulated(j)],
            coupling_model: *coupling_model,
            g: *g,
            span: (l.start, l.end),
        })
    }

    pub fn coupling(&self, wi: f64, wj: f64) -> f64 {
        self.g * self.coupling_model.shape(wi, wj)
    }

    fn wv(&self, k: usize, t: f64) -> (f64, f64) {
        (self.w[k].eval_clamped(t), self.v[k].eval_or_zero(t))
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<Vec<f64>> {
    if a.abs() <= 1e-300 * (b.abs() + c.abs()).max(1e-300) || a == 0.0 {
        return if b == 0.0 { None } else { Some(vec![-c / b]) };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        // Round-off tolerance for a double root.
        if disc > -1e-12 * b * b {
            return Some(vec![-b / (2.0 * a)]);
        }
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    Some(r)
}

/// Per-sample result of the frequency co-solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NewFrequencies {
    pub wi: Vec<f64>,
    pub wj: Vec<f64>,
    pub j: Vec<f64>,
    /// Samples where both quadratic roots were admissible.
    pub ambiguous: usize,
}

/// Solve the frequency constraints at each (f, f') sample: the phase combination fixed by the case,
/// the complementary one from J(w'_i, w'_j) = f' J(w_i(f), w_j(f)).
pub fn new_frequencies(pair: &FluxPair, taus: &[f64], f: &[f64], d: &[f64]) -> Result<NewFrequencies> {
    let mut out = NewFrequencies::default();
    let mut prev: Option<f64> = None;
    let r_bus = match pair.coupling_model {
        CouplingModel::BusResonator { omega_r } => Some(omega_r),
        CouplingModel::DirectCapacitive => None,
    };
    for k in 0..taus.len() {
        let (x, s) = (f[k], d[k]);
        let (wi, vi) = pair.wv(0, x);
        let (wj, vj) = pair.wv(1, x);
        let jt = s * pair.coupling(wi, wj);
        let admissible = |cand: f64, other: f64| -> bool {
            cand > 0.0
                && other > 0.0
                && match r_bus {
                    Some(r) => (cand - r).signum() == (wi - r).signum() && (other - r).signum() == (wj - r).signum(),
                    None => true,
                }
        };
        // Candidate (w'_i, w'_j) pairs.
        let cands: Vec<(f64, f64)> = match pair.case {
            CaseTag::ZOnly => vec![(pair.w[0].eval_clamped(taus[k]), pair.w[1].eval_clamped(taus[k]))],
            CaseTag::ZCMinus => {
                let delta = s * (wi - wj + vi - vj);
                let roots = match r_bus {
                    Some(r) => quadratic_roots(jt, -(jt * delta + 2.0 * pair.g), pair.g * delta)
                        .map(|u| u.into_iter().map(|u| u + r).collect::<Vec<_>>()),
                    None => quadratic_roots(1.0, -delta, -(jt / pair.g).powi(2)),
                }
                .ok_or(VzError::QuadraticNoRealRoot(taus[k]))?;
                roots.into_iter().map(|x| (x, x - delta)).collect()
            }
            CaseTag::ZCPlus => {
                let sigma = s * (wi + wj + vi + vj);
                let roots = match r_bus {
                    Some(r) => {
                        let sr = sigma - 2.0 * r;
                        quadratic_roots(jt, -jt * sr, pair.g * sr).map(|u| u.into_iter().map(|u| u + r).collect::<Vec<_>>())
                    }
                    None => quadratic_roots(1.0, -sigma, (jt / pair.g).powi(2)),
                }
                .ok_or(VzError::QuadraticNoRealRoot(taus[k]))?;
                roots.into_iter().map(|x| (x, sigma - x)).collect()
            }
            CaseTag::ZQi | CaseTag::ZQj => {
                let (known, other_first) = if pair.case == CaseTag::ZQi {
                    (s * (wi + vi), false)
                } else {
                    (s * (wj + vj), true)
                };
                let other = match r_bus {
                    Some(r) => r + 1.0 / (jt / pair.g - 1.0 / (known - r)),
                    None => (jt / pair.g).powi(2) / known,
                };
                if !other.is_finite() {
                    return Err(VzError::QuadraticNoRealRoot(taus[k]));
                }
                if other_first {
                    vec![(other, known)]
                } else {
                    vec![(known, other)]
                }
            }
            CaseTag::General => unreachable!(),
        };
        let good: Vec<(f64, f64)> = cands.iter().copied().filter(|(a, b)| admissible(*a, *b)).collect();
        if good.len() > 1 {
            out.ambiguous += 1;
        }
        let pool = if good.is_empty() { &cands } else { &good };
        let reference = prev.unwrap_or(wi);
        let pick = pool
            .iter()
            .copied()
            .min_by(|a, b| (a.0 - reference).abs().partial_cmp(&(b.0 - reference).abs()).unwrap())
            .ok_or(VzError::QuadraticNoRealRoot(taus[k]))?;
        if good.is_empty() && pair.case != CaseTag::ZOnly {
            return Err(VzError::QuadraticNoRealRoot(taus[k]));
        }
        prev = Some(pick.0);
        out.wi.push(pick.0);
        out.wj.push(pick.1);
        out.j.push(pair.coupling(pick.0, pick.1));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSolution {
    /// Shared frame phase per qubit on the union of original and compiled spans.
    pub phi: Vec<SampledFunction>,
    /// New frequency trajectories on the compiled span.
    pub omega_new: Vec<SampledFunction>,
    pub j_new: SampledFunction,
    /// max |phi'(tau) - f' phi'(f) - S'(tau)| / max |w| over the compiled grid.
    pub residual_b: f64,
    /// max |J(w') - f' J(w(f))| / max |J|.
    pub residual_c: f64,
    /// Samples inside the boundary band where phi is set by the boundary rule.
    pub boundary_samples: usize,
    pub ambiguous_roots: usize,
}

pub const FRAME_ITERATION_CAP: usize = 10_000;

/// Solve frequencies and a shared rotating frame for a given dilation. The frame satisfies
/// phi(tau) - phi(f(tau)) = S(tau) with S = int w' - int w o f; orbits of the dilation carry every
/// point to a boundary band near the fixed point where phi follows the original qubit phase.
pub fn solve_flux_frame(
    model: &HardwareModel,
    rec: &DilationRecord,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
) -> Result<FrameSolution> {
    let pair = FluxPair::from_inputs(model, schedule, program)?;
    let taus: Vec<f64> = rec.f.times().collect();
    let nf = new_frequencies(&pair, &taus, rec.f.samples(), rec.dfdtau.samples())?;
    let (t0, dt, n) = (rec.f.t0(), rec.f.dt(), taus.len());
    let w_new = [
        SampledFunction::new(t0, dt, nf.wi.clone(), Unit::RadPerSec)?,
        SampledFunction::new(t0, dt, nf.wj.clone(), Unit::RadPerSec)?,
    ];
    let j_new = SampledFunction::new(t0, dt, nf.j.clone(), Unit::RadPerSec)?;

    // Sign of f - tau must not change.
    let diffs: Vec<f64> = rec.f.samples().iter().zip(&taus).map(|(f, t)| f - t).collect();
    let scale = rec.tau1() - rec.tau0();
    let tol = 1e-12 * scale;
    let up = diffs.iter().any(|d| *d > tol);
    let down = diffs.iter().any(|d| *d < -tol);
    if up && down {
        let k = diffs.iter().position(|d| if up { *d < -tol } else { *d > tol }).unwrap_or(0);
        return Err(VzError::SignViolation(taus[k]));
    }

    let big_w_new = [accumulate_phase(&w_new[0], 0.0), accumulate_phase(&w_new[1], 0.0)];
    let big_w = [accumulate_phase(&pair.w[0], 0.0), accumulate_phase(&pair.w[1], 0.0)];
    let lo = rec.tau0().min(pair.span.0);
    let hi = rec.tau1().max(pair.span.1);
    // Offsets make S vanish at the dilation's fixed point (or lower end).
    let anchor = rec.tau0();
    let s_of = |k: usize, tau: f64| -> f64 {
        let x = rec.f.eval_clamped(tau);
        big_w_new[k].eval_clamped(tau) - big_w[k].eval_clamped(x) - (big_w_new[k].eval_clamped(anchor) - big_w[k].eval_clamped(rec.f.eval_clamped(anchor)))
    };
    let ds_of = |k: usize, tau: f64| -> f64 {
        let x = rec.f.eval_clamped(tau);
        w_new[k].eval_clamped(tau) - rec.dfdtau.eval_clamped(tau) * pair.w[k].eval_clamped(x)
    };
    let finv = crate::sampled::invert_monotone(&rec.f)?;
    // Points move toward the lower end under f (f <= tau) or f^-1 (f >= tau).
    let expanding = up;
    // Boundary band: reached by the orbit of `hi` within half the cap.
    let step_down = |y: f64| -> Option<f64> {
        if expanding {
            if y < finv.t0() || y > finv.t_end() {
                None
            } else {
                Some(finv.eval_clamped(y))
            }
        } else if y < rec.tau0() || y > rec.tau1() {
            None
        } else {
            Some(rec.f.eval_clamped(y))
        }
    };
    let mut band = hi;
    for _ in 0..FRAME_ITERATION_CAP / 2 {
        match step_down(band) {
            Some(y) if y < band => band = y,
            _ => break,
        }
    }
    let band = band.max(lo + 1e-9 * (hi - lo));
    let eval_phi = |k: usize, y: f64| -> Result<(f64, f64, bool)> {
        // Returns (phi, phi', in_band).
        let mut y = y;
        let mut acc = 0.0;
        let mut dacc = 0.0;
        let mut gain = 1.0;
        for _ in 0..FRAME_ITERATION_CAP {
            if y <= band {
                let phi = big_w[k].eval_clamped(y) + acc;
                let dphi = gain * pair.w[k].eval_clamped(y) + dacc;
                return Ok((phi, dphi, false));
            }
            let Some(z) = step_down(y) else {
                return Ok((big_w[k].eval_clamped(y) + acc, gain * pair.w[k].eval_clamped(y) + dacc, true));
            };
            if expanding {
                // phi(y) = phi(z) - S(z), phi'(y) = (phi'(z) - S'(z)) / f'(z), z = f^-1(y)
                let fp = rec.dfdtau.eval_clamped(z);
                acc -= s_of(k, z);
                dacc = (dacc - gain * ds_of(k, z)) / fp;
                gain /= fp;
                let _ = &mut dacc;
            } else {
                // phi(y) = phi(f(y)) + S(y), phi'(y) = f'(y) phi'(f(y)) + S'(y)
                let fp = rec.dfdtau.eval_clamped(y);
                acc += s_of(k, y);
                dacc += gain * ds_of(k, y);
                gain *= fp;
            }
            y = z;
        }
        Err(VzError::FixedPointStall(format!(
            "frame recursion did not reach the boundary band below {band:.6e} in {FRAME_ITERATION_CAP} steps"
        )))
    };
    let m = 2 * n - 1;
    let gdt = (hi - lo) / (m - 1) as f64;
    let mut phi = vec![];
    let mut boundary = 0;
    for k in 0..2 {
        let mut vals = Vec::with_capacity(m);
        let mut slopes = Vec::with_capacity(m);
        for q in 0..m {
            let y = lo + q as f64 * gdt;
            let (p, dp, stuck) = eval_phi(k, y)?;
            if y <= band || stuck {
                boundary += 1;
            }
            vals.push(p);
            slopes.push(dp);
        }
        phi.push(SampledFunction::integral_form(lo, gdt, vals, slopes, Unit::Radians)?);
    }
    // Residuals at compiled nodes outside the boundary band.
    let wmax = pair.w[0].max_abs().max(pair.w[1].max_abs()).max(1e-300);
    let mut res_b: f64 = 0.0;
    for (q, tau) in taus.iter().enumerate() {
        let x = rec.f.samples()[q];
        if *tau <= band || x <= band {
            continue;
        }
        for k in 0..2 {
            let (_, d_tau, s1) = eval_phi(k, *tau)?;
            let (_, d_x, s2) = eval_phi(k, x)?;
            if s1 || s2 {
                continue;
            }
            let lhs = nf_w(&nf, k, q) - d_tau;
            let rhs = rec.dfdtau.samples()[q] * (pair.w[k].eval_clamped(x) - d_x);
            res_b = res_b.max((lhs - rhs).abs() / wmax);
        }
    }
    let jmax = nf.j.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let res_c = taus
        .iter()
        .enumerate()
        .map(|(q, _)| {
            let x = rec.f.samples()[q];
            let target = rec.dfdtau.samples()[q] * pair.coupling(pair.w[0].eval_clamped(x), pair.w[1].eval_clamped(x));
            (nf.j[q] - target).abs() / jmax
        })
        .fold(0.0, f64::max);
    Ok(FrameSolution {
        phi,
        omega_new: w_new.to_vec(),
        j_new,
        residual_b: res_b,
        residual_c: res_c,
        boundary_samples: boundary,
        ambiguous_roots: nf.ambiguous,
    })
}

fn nf_w(nf: &NewFrequencies, k: usize, q: usize) -> f64 {
    if k == 0 {
        nf.wi[q]
    } else {
        nf.wj[q]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Highest polynomial order M.
    pub m: usize,
    pub method: Method,
    /// Retry with the simplex method when the first result violates a constraint.
    pub fallback: bool,
    pub minimize: MinimizeOptions,
    pub cost_samples: usize,
    /// Height of the guard band above the frequency floor (rad/s).
    pub freq_guard: f64,
    /// Raise the lambda lower bounds by 10x up to this many times while constraints are violated.
    pub max_continuations: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            m: 11,
            method: Method::LinearTrustRegion,
            fallback: true,
            minimize: MinimizeOptions {
                rho_begin: 0.05,
                rho_end: 1e-7,
                max_evals: 40_000,
                ftol_rel: 1e-8,
            },
            cost_samples: 801,
            freq_guard: 2.0 * PI * 100e3,
            max_continuations: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationOptimum {
    pub poly: DilationPolynomial,
    pub cost: f64,
    pub evals: usize,
    pub method: Method,
    pub converged: bool,
    /// min over tau of f(tau) - tau (seconds).
    pub min_f_margin: f64,
    /// min over tau and k of w'_k(tau) - w_k(t0) (rad/s).
    pub min_freq_margin: f64,
    pub lambda_floor: f64,
    pub initial_point: String,
    pub stopping_rule: String,
}

/// Cost of already-solved samples: mean over tau of the frequency distance plus weighted
/// ReLU penalties for f < tau and for frequencies below their values at the start.
/// Times in ns and frequencies in GHz.
pub fn cost_from_samples(
    taus: &[f64],
    f: &[f64],
    new: [&[f64]; 2],
    orig: [&[f64]; 2],
    floor: [&[f64]; 2],
    lambda: [f64; 3],
    t_span: f64,
) -> f64 {
    let n = taus.len();
    let mut total = 0.0;
    for q in 0..n {
        let wdist = ((new[0][q] - orig[0][q]).powi(2) + (new[1][q] - orig[1][q]).powi(2)).sqrt() / GHZ;
        let lag = (taus[q] - f[q]).max(0.0) / NS;
        let below: f64 = (0..2).map(|k| lambda[k + 1] * (floor[k][q] - new[k][q]).max(0.0) / GHZ).sum();
        let integrand = wdist + lambda[0] * lag + below;
        let h = if n < 2 {
            0.0
        } else if q == 0 {
            0.5 * (taus[1] - taus[0])
        } else if q == n - 1 {
            0.5 * (taus[n - 1] - taus[n - 2])
        } else {
            0.5 * (taus[q + 1] - taus[q - 1])
        };
        total += integrand * h;
    }
    total / t_span
}

fn poly_samples(poly: &DilationPolynomial, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dt = (poly.tau1 - poly.t0) / (n - 1) as f64;
    let taus: Vec<f64> = (0..n).map(|k| poly.t0 + k as f64 * dt).collect();
    let f = taus.iter().map(|t| poly.eval(*t)).collect();
    let d = taus.iter().map(|t| poly.deriv(*t)).collect();
    (taus, f, d)
}

const INFEASIBLE: f64 = 1e6;

/// Relative slack when checking f >= tau and the frequency floor. The polynomial pins f'(0) = 1,
/// so a virtual pulse that is not exactly zero at the start shifts w'(0) by a tiny amount.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// Cost of a polynomial (infeasible polynomials get a large finite penalty). The frequency floor
/// is raised by `guard * sin(pi s)` so the optimum keeps a margin away from the pinned endpoints.
pub fn dilation_cost(pair: &FluxPair, poly: &DilationPolynomial, samples: usize, guard: f64) -> f64 {
    if !(poly.tau1 > poly.t0) {
        return INFEASIBLE * 10.0;
    }
    let (taus, f, d) = poly_samples(poly, samples.max(3));
    let bad = d.iter().filter(|x| **x <= 0.0).count();
    if bad > 0 {
        return INFEASIBLE * (1.0 + bad as f64 / samples as f64);
    }
    let nf = match new_frequencies(pair, &taus, &f, &d) {
        Ok(nf) => nf,
        Err(_) => return INFEASIBLE * 2.0,
    };
    let oi: Vec<f64> = taus.iter().map(|t| pair.w[0].eval_clamped(*t)).collect();
    let oj: Vec<f64> = taus.iter().map(|t| pair.w[1].eval_clamped(*t)).collect();
    let span = poly.tau1 - poly.t0;
    let lift: Vec<f64> = taus.iter().map(|t| guard * (PI * (t - poly.t0) / span).sin()).collect();
    let fi: Vec<f64> = lift.iter().map(|l| pair.w[0].eval_clamped(pair.span.0) + l).collect();
    let fj: Vec<f64> = lift.iter().map(|l| pair.w[1].eval_clamped(pair.span.0) + l).collect();
    cost_from_samples(
        &taus,
        &f,
        [&nf.wi, &nf.wj],
        [&oi, &oj],
        [&fi, &fj],
        poly.lambda,
        pair.span.1 - pair.span.0,
    )
}

fn unpack(pair: &FluxPair, m: usize, x: &[f64]) -> DilationPolynomial {
    let t_span = pair.span.1 - pair.span.0;
    let nc = m.saturating_sub(3);
    DilationPolynomial::new(
        pair.span.0,
        t_span,
        pair.span.0 + x[0] * t_span,
        x[1..1 + nc].to_vec(),
        [x[1 + nc], x[2 + nc], x[3 + nc]],
    )
}

fn margins(pair: &FluxPair, poly: &DilationPolynomial, n: usize) -> Result<(f64, f64)> {
    let (taus, f, d) = poly_samples(poly, n);
    let nf = new_frequencies(pair, &taus, &f, &d)?;
    let fm = taus.iter().zip(&f).map(|(t, f)| f - t).fold(f64::INFINITY, f64::min);
    let floor = [pair.w[0].eval_clamped(pair.span.0), pair.w[1].eval_clamped(pair.span.0)];
    let wm = nf
        .wi
        .iter()
        .map(|w| w - floor[0])
        .chain(nf.wj.iter().map(|w| w - floor[1]))
        .fold(f64::INFINITY, f64::min);
    Ok((fm, wm))
}

/// Minimise the dilation cost over (tau1, c_4..c_M, lambda_0..lambda_2) with lambda >= 1,
/// starting from f = identity.
pub fn optimize_dilation(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    settings: &OptimizerSettings,
) -> Result<DilationOptimum> {
    let pair = FluxPair::from_inputs(model, schedule, program)?;
    optimize_pair(&pair, settings)
}

pub fn optimize_pair(pair: &FluxPair, settings: &OptimizerSettings) -> Result<DilationOptimum> {
    let m = settings.m.max(3);
    let nc = m - 3;
    let dim = 1 + nc + 3;
    let mut x0 = vec![0.0; dim];
    x0[0] = 1.0;
    for k in 0..3 {
        x0[1 + nc + k] = 1.0;
    }
    let tol_f = -FEASIBILITY_RTOL * (pair.span.1 - pair.span.0);
    let tol_w = -FEASIBILITY_RTOL * pair.w[0].max_abs().max(pair.w[1].max_abs());
    let check_n = 8193;
    let mut floor = 1.0;
    let mut best: Option<(MinimizeResult, DilationPolynomial, (f64, f64))> = None;
    for _round in 0..=settings.max_continuations {
        let mut lower: Vec<Option<f64>> = vec![None; dim];
        lower[0] = Some(0.05);
        for k in 0..3 {
            lower[1 + nc + k] = Some(floor);
        }
        let start = match &best {
            Some((r, _, _)) => {
                let mut s = r.x.clone();
                for k in 0..3 {
                    s[1 + nc + k] = s[1 + nc + k].max(floor);
                }
                s
            }
            None => x0.clone(),
        };
        let mut cost = |x: &[f64]| dilation_cost(pair, &unpack(pair, m, x), settings.cost_samples, settings.freq_guard);
        let mut runs = vec![minimize(settings.method, &mut cost, &start, &lower, &settings.minimize)];
        let feasible = |r: &MinimizeResult| -> Option<(f64, f64)> {
            margins(pair, &unpack(pair, m, &r.x), check_n).ok()
        };
        let ok = |mg: Option<(f64, f64)>| mg.map(|(a, b)| a >= tol_f && b >= tol_w).unwrap_or(false);
        if settings.fallback && !ok(feasible(&runs[0])) {
            let other = match settings.method {
                Method::LinearTrustRegion => Method::NelderMead,
                Method::NelderMead => Method::LinearTrustRegion,
            };
            let from = runs[0].x.clone();
            runs.push(minimize(other, &mut cost, &from, &lower, &settings.minimize));
        }
        for r in &runs {
            if !r.fx.is_finite() {
                return Err(VzError::OptimizerDiverged(format!("cost {} after {} evaluations", r.fx, r.evals)));
            }
        }
        let pick = runs
            .into_iter()
            .map(|r| {
                let mg = feasible(&r);
                (r, mg)
            })
            .min_by(|a, b| {
                let ka = (!ok(a.1), a.0.fx);
                let kb = (!ok(b.1), b.0.fx);
                ka.partial_cmp(&kb).unwrap()
            })
            .unwrap();
        let poly = unpack(pair, m, &pick.0.x);
        let mg = pick.1.unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY));
        let done = ok(pick.1);
        best = Some((pick.0, poly, mg));
        if done {
            break;
        }
        floor *= 10.0;
    }
    let (r, poly, mg) = best.expect("at least one round");
    Ok(DilationOptimum {
        cost: r.fx,
        evals: r.evals,
        method: r.method,
        converged: r.converged,
        poly,
        min_f_margin: mg.0,
        min_freq_margin: mg.1,
        lambda_floor: floor,
        initial_point: "f = identity (tau1 = T, c_m = 0, lambda = 1)".into(),
        stopping_rule: format!(
            "trust radius < {:.1e} or relative cost change < {:.1e}",
            settings.minimize.rho_end, settings.minimize.ftol_rel
        ),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FluxDilation {
    Identity,
    Polynomial(DilationPolynomial),
    Optimize(OptimizerSettings),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxOptions {
    pub dilation: FluxDilation,
    pub nodes: usize,
}

impl Default for FluxOptions {
    fn default() -> Self {
        FluxOptions {
            dilation: FluxDilation::Optimize(OptimizerSettings::default()),
            nodes: 8193,
        }
    }
}

/// Compile a flux-tunable pair. Longitudinal couplings keep f = tau and the fluxes; transversal
/// couplings use the requested dilation with frequencies from the co-solve.
pub fn compile_flux(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    opts: &FluxOptions,
) -> Result<CompiledSchedule> {
    let pair = FluxPair::from_inputs(model, schedule, program)?;
    let (t0, t1) = pair.span;
    let (a, b) = program.span();
    if (a - t0).abs() > 1e-9 * (t1 - t0) || (b - t1).abs() > 1e-9 * (t1 - t0) {
        return Err(VzError::Domain("program and schedule spans differ".into()));
    }
    if program.is_zero() {
        let mut c = super::identity_compile(schedule, opts.nodes)?;
        c.dilations[0][0].record.case = pair.case;
        return Ok(c);
    }
    let mut diagnostics = BTreeMap::new();
    let poly = match (&opts.dilation, pair.case) {
        (_, CaseTag::ZOnly) | (FluxDilation::Identity, _) => DilationPolynomial::identity(t0, t1 - t0, 3),
        (FluxDilation::Polynomial(p), _) => p.clone(),
        (FluxDilation::Optimize(s), _) => {
            let o = optimize_pair(&pair, s)?;
            diagnostics.insert("optimizer_cost".into(), o.cost);
            diagnostics.insert("optimizer_evals".into(), o.evals as f64);
            diagnostics.insert("optimizer_converged".into(), if o.converged { 1.0 } else { 0.0 });
            diagnostics.insert("min_f_margin".into(), o.min_f_margin);
            diagnostics.insert("min_freq_margin".into(), o.min_freq_margin);
            diagnostics.insert("lambda_floor".into(), o.lambda_floor);
            o.poly
        }
    };
    let rec = poly.to_record(opts.nodes, pair.case)?;
    let taus: Vec<f64> = rec.f.times().collect();
    let nf = new_frequencies(&pair, &taus, rec.f.samples(), rec.dfdtau.samples())?;
    diagnostics.insert("ambiguous_roots".into(), nf.ambiguous as f64);
    let (s0, dt) = (rec.f.t0(), rec.f.dt());
    let w_new = [
        SampledFunction::new(s0, dt, nf.wi.clone(), Unit::RadPerSec)?,
        SampledFunction::new(s0, dt, nf.wj.clone(), Unit::RadPerSec)?,
    ];
    let l = &schedule.layers[0];
    let mut nl = Layer::new(rec.tau0(), rec.tau1());
    nl.pairs.push(PairPulse {
        i: pair.i,
        j: pair.j,
        coupling: SampledFunction::new(s0, dt, nf.j.clone(), Unit::RadPerSec)?,
    });
    nl.freqs.insert(pair.i, w_new[0].clone());
    nl.freqs.insert(pair.j, w_new[1].clone());
    for (k, d) in &l.drives {
        let idx = if *k == pair.i { 0 } else { 1 };
        let bv = &pair.big_v[idx];
        let mut si = Vec::with_capacity(taus.len());
        let mut sq = Vec::with_capacity(taus.len());
        for (x, fp) in rec.f.samples().iter().zip(rec.dfdtau.samples()) {
            let (ri, rq) = DriveMap::Improper.rotate(d.i.eval_or_zero(*x), d.q.eval_or_zero(*x), bv.eval_clamped(*x));
            si.push(fp * ri);
            sq.push(fp * rq);
        }
        nl.drives.insert(
            *k,
            Quadrature {
                i: SampledFunction::new(s0, dt, si, d.i.unit())?,
                q: SampledFunction::new(s0, dt, sq, d.q.unit())?,
            },
        );
    }
    let frames = vec![
        Phase::Sampled {
            f: accumulate_phase(&w_new[0], program.offset(pair.i)),
        },
        Phase::Sampled {
            f: accumulate_phase(&w_new[1], program.offset(pair.j)),
        },
    ];
    let residual_z = vec![
        mod_4pi(pair.big_v[0].samples().last().copied().unwrap_or(0.0)),
        mod_4pi(pair.big_v[1].samples().last().copied().unwrap_or(0.0)),
    ];
    diagnostics.insert("tau1".into(), rec.tau1());
    diagnostics.insert("max_dfdtau".into(), rec.dfdtau.max_abs());
    Ok(CompiledSchedule {
        schedule: PulseSchedule {
            n_qubits: 2,
            layers: vec![nl],
        },
        dilations: vec![vec![PieceDilation {
            qubits: vec![pair.i, pair.j],
            record: rec,
        }]],
        residual_z,
        layer_v0: vec![vec![program.offset(0), program.offset(1)]],
        idle: vec![vec![], vec![]],
        frames: Some(frames),
        diagnostics,
    })
}

/// Re-express the drives of a compiled flux schedule on constant carriers `rate_k t`: the physical
/// drive is synthesised on its moving frame and split again with the local I/Q solver.
/// `samples_per_period` sets the resolution of the intermediate drive.
pub fn constant_carrier_drives(
    compiled: &CompiledSchedule,
    rates: &BTreeMap<usize, f64>,
    samples_per_period: usize,
) -> Result<BTreeMap<usize, Quadrature>> {
    let frames = compiled
        .frames
        .as_ref()
        .ok_or_else(|| VzError::Validation("compiled schedule carries no frames".into()))?;
    let layer = compiled
        .schedule
        .layers
        .first()
        .ok_or_else(|| VzError::Validation("compiled schedule has no layers".into()))?;
    let mut out = BTreeMap::new();
    for (k, d) in &layer.drives {
        let rate = *rates
            .get(k)
            .ok_or_else(|| VzError::Validation(format!("no carrier rate for qubit {k}")))?;
        let frame = frames.get(*k).ok_or(VzError::DimensionMismatch(*k, frames.len()))?;
        let (a, b) = d.i.domain();
        let fastest = d.i.times().map(|t| frame.deriv_clamped(t).abs()).fold(rate.abs(), f64::max);
        let n = ((b - a) * fastest / (2.0 * PI) * samples_per_period as f64).ceil() as usize + 1;
        let cubic = |f: &SampledFunction| -> Result<SampledFunction> {
            let c = SampledFunction::monotone_cubic(f.t0(), f.dt(), f.samples().to_vec(), f.unit())?;
            c.resample(a, b, n.max(f.len()))
        };
        let (i, q) = (cubic(&d.i)?, cubic(&d.q)?);
        let omega = synthesize(&i, &q, frame, 1.0)?;
        let (ni, nq) = decompose_local(&omega, &Phase::linear(rate), 1.0, &IqOptions::default())?;
        out.insert(
            *k,
            Quadrature {
                i: ni.with_unit(d.i.unit()),
                q: nq.with_unit(d.q.unit()),
            },
        );
    }
    Ok(out)
}
