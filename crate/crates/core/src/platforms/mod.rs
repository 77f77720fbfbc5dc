//! Control distortion for each hardware model.
//!
//! Every platform is handled by one engine that works on frame phases: pairs are classified,
//! dilations are chained through the layers, and envelopes are rewritten as
//! `x'(tau) = f'(tau) * x(f(tau))` with I/Q additionally rotated by the virtual phase.

pub mod cr;
pub mod flux;
pub mod heisenberg;
pub mod spin;
pub mod tc;

use crate::classifier::{classify, decompose, rwa_project, RwaLevel};
use crate::dilation::{chain_layers, ChainOptions, ChainResult, LayerPlan, PairPlan};
use crate::error::{Result, VzError};
use crate::model::{
    CaseTag, CompiledSchedule, CrDrive, DilationRecord, HardwareModel, Layer, PairPulse, PieceDilation,
    PulseSchedule, Quadrature, VirtualZProgram,
};
use crate::sampled::{Phase, SampledFunction, Unit};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub use flux::{compile_flux, optimize_dilation, solve_flux_frame, DilationPolynomial, FrameSolution, OptimizerSettings};
pub use heisenberg::{compile_heisenberg_target, FieldTarget};

/// How the rotating-frame drive vector depends on (I, Q).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMap {
    /// (r_x, r_y) proportional to (I, Q): I/Q rotate by -W.
    Proper,
    /// (r_x, r_y) proportional to (Q, I): I/Q rotate by +W.
    Improper,
}

impl DriveMap {
    pub fn for_model(model: &HardwareModel) -> Self {
        match model {
            HardwareModel::TunableCoupler { .. } | HardwareModel::FluxTunable { .. } => DriveMap::Improper,
            _ => DriveMap::Proper,
        }
    }

    /// Rotate (I, Q) by the virtual phase w.
    #[inline]
    pub fn rotate(self, i: f64, q: f64, w: f64) -> (f64, f64) {
        let (s, c) = w.sin_cos();
        match self {
            DriveMap::Proper => (c * i + s * q, -s * i + c * q),
            DriveMap::Improper => (c * i - s * q, s * i + c * q),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub chain: ChainOptions,
}

pub fn rwa_level(model: &HardwareModel) -> RwaLevel {
    match model {
        HardwareModel::DirectXY { .. } => RwaLevel::None,
        _ => RwaLevel::DropCPlus,
    }
}

/// Case tag of the pair (i, j) after the platform's RWA projection.
pub fn pair_case(model: &HardwareModel, i: usize, j: usize) -> Result<CaseTag> {
    let op = rwa_project(&model.coupling_op(i, j)?, rwa_level(model))?;
    Ok(classify(&decompose(&op)?))
}

/// Compile for any model, dispatching on the variant.
pub fn compile(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    match model {
        HardwareModel::SpinQubit { .. } => spin::compile_spin(model, schedule, program, opts),
        HardwareModel::TunableCoupler { .. } => tc::compile_tunable_coupler(model, schedule, program, opts),
        HardwareModel::CrossResonance { .. } => cr::compile_cross_resonance(model, schedule, program, opts),
        HardwareModel::FluxTunable { .. } => compile_flux(model, schedule, program, &flux::FluxOptions::default()),
        HardwareModel::DirectXY { .. } => compile_generic(model, schedule, program, opts),
    }
}

fn check_inputs(model: &HardwareModel, schedule: &PulseSchedule, program: &VirtualZProgram) -> Result<()> {
    model.validate()?;
    schedule.validate()?;
    program.validate()?;
    let n = model.n_qubits();
    if schedule.n_qubits != n {
        return Err(VzError::DimensionMismatch(schedule.n_qubits, n));
    }
    if program.n_qubits() != n {
        return Err(VzError::DimensionMismatch(program.n_qubits(), n));
    }
    let (a, b) = schedule.span();
    let (c, d) = program.span();
    let tol = 1e-9 * (b - a);
    if (a - c).abs() > tol || (b - d).abs() > tol {
        return Err(VzError::Domain(format!(
            "program spans [{c}, {d}] but the schedule spans [{a}, {b}]"
        )));
    }
    Ok(())
}

fn identity_compile(schedule: &PulseSchedule, n_nodes: usize) -> Result<CompiledSchedule> {
    let n = schedule.n_qubits;
    let mut dilations = vec![];
    for l in &schedule.layers {
        let mut pieces = vec![];
        let mut covered = vec![false; n];
        for p in &l.pairs {
            covered[p.i] = true;
            covered[p.j] = true;
            pieces.push(PieceDilation {
                qubits: vec![p.i.min(p.j), p.i.max(p.j)],
                record: DilationRecord::identity(l.start, l.end, n_nodes, CaseTag::ZOnly)?,
            });
        }
        for k in (0..n).filter(|k| !covered[*k]) {
            pieces.push(PieceDilation {
                qubits: vec![k],
                record: DilationRecord::identity(l.start, l.end, n_nodes, CaseTag::ZOnly)?,
            });
        }
        pieces.sort_by_key(|p| p.qubits[0]);
        dilations.push(pieces);
    }
    Ok(CompiledSchedule {
        schedule: schedule.clone(),
        dilations,
        residual_z: vec![0.0; n],
        layer_v0: vec![vec![0.0; n]; schedule.layers.len()],
        idle: vec![vec![]; n],
        frames: None,
        diagnostics: BTreeMap::new(),
    })
}

/// Node-wise resampling of `g(f(tau), f'(tau))` on a piece's grid.
fn on_piece(rec: &DilationRecord, unit: Unit, g: impl Fn(f64, f64) -> f64) -> Result<SampledFunction> {
    let samples: Vec<f64> = rec
        .f
        .samples()
        .iter()
        .zip(rec.dfdtau.samples())
        .map(|(f, d)| g(*f, *d))
        .collect();
    SampledFunction::new(rec.f.t0(), rec.f.dt(), samples, unit)
}

/// Build the compiled layer list from a chain result.
pub(crate) fn distort(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    chain: &ChainResult,
) -> Result<Vec<Layer>> {
    let map = DriveMap::for_model(model);
    let drift = model.idle_drift();
    let n = schedule.n_qubits;
    let acc: Vec<SampledFunction> = (0..n).map(|k| program.accumulated(k)).collect();
    let mut out = Vec::with_capacity(schedule.layers.len());
    let last = schedule.layers.len() - 1;
    for (li, layer) in schedule.layers.iter().enumerate() {
        let pieces = &chain.pieces[li];
        let piece = |k: usize| -> &DilationRecord {
            &pieces.iter().find(|p| p.qubits.contains(&k)).expect("every qubit has a piece").record
        };
        let w = |k: usize, t: f64| acc[k].eval_clamped(t) + chain.layer_offsets[li][k];
        let lo = if li == 0 {
            chain.span.0
        } else {
            pieces.iter().map(|p| p.record.tau0()).fold(f64::INFINITY, f64::min)
        };
        let hi = if li == last {
            chain.span.1
        } else {
            pieces.iter().map(|p| p.record.tau1()).fold(f64::NEG_INFINITY, f64::max)
        };
        let mut nl = Layer::new(lo, hi);
        for p in &layer.pairs {
            let rec = piece(p.i);
            let j = &p.coupling;
            nl.pairs.push(PairPulse {
                i: p.i,
                j: p.j,
                coupling: on_piece(rec, j.unit(), |f, d| d * j.eval_or_zero(f))?,
            });
        }
        for (k, d) in &layer.drives {
            let rec = piece(*k);
            let (iq_i, iq_q) = rotated(rec, &d.i, &d.q, map, |t| w(*k, t))?;
            nl.drives.insert(*k, Quadrature { i: iq_i, q: iq_q });
        }
        for c in &layer.cr {
            let rec = piece(c.target);
            if piece(c.control).f != rec.f {
                return Err(VzError::UnsupportedCombination(format!(
                    "cross-resonance drive {}->{} spans pieces with different dilations",
                    c.control, c.target
                )));
            }
            let (iq_i, iq_q) = rotated(rec, &c.i, &c.q, map, |t| w(c.target, t))?;
            nl.cr.push(CrDrive {
                control: c.control,
                target: c.target,
                i: iq_i,
                q: iq_q,
            });
        }
        for k in 0..n {
            let dk = drift.get(k).copied().unwrap_or(0.0);
            let r = layer.rz.get(&k);
            if r.is_none() && dk == 0.0 {
                continue;
            }
            let rz = |t: f64| r.map(|r| r.eval_or_zero(t)).unwrap_or(0.0);
            nl.rz.insert(k, on_piece(piece(k), Unit::RadPerSec, |f, d| d * (rz(f) + dk) - dk)?);
        }
        for (k, fr) in &layer.freqs {
            nl.freqs.insert(*k, fr.clone());
        }
        out.push(nl);
    }
    Ok(out)
}

fn rotated(
    rec: &DilationRecord,
    i: &SampledFunction,
    q: &SampledFunction,
    map: DriveMap,
    w: impl Fn(f64) -> f64,
) -> Result<(SampledFunction, SampledFunction)> {
    let mut si = Vec::with_capacity(rec.f.len());
    let mut sq = Vec::with_capacity(rec.f.len());
    for (f, d) in rec.f.samples().iter().zip(rec.dfdtau.samples()) {
        let (a, b) = map.rotate(i.eval_or_zero(*f), q.eval_or_zero(*f), w(*f));
        si.push(d * a);
        sq.push(d * b);
    }
    Ok((
        SampledFunction::new(rec.f.t0(), rec.f.dt(), si, i.unit())?,
        SampledFunction::new(rec.f.t0(), rec.f.dt(), sq, q.unit())?,
    ))
}

fn compile_frames(model: &HardwareModel) -> Result<Vec<Phase>> {
    model.frames().ok_or_else(|| {
        VzError::UnsupportedCombination("model has schedule-dependent frames; use its dedicated compiler".into())
    })
}

/// Re-express a direct-XY model and schedule in other rotating frames. With
/// d = new - old, drives rotate by d, the Z controls lose d', and couplings follow the new frames.
pub fn change_frame(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    new_frames: &[Phase],
) -> Result<(HardwareModel, PulseSchedule)> {
    let HardwareModel::DirectXY {
        frames,
        couplings,
        idle_drift,
    } = model
    else {
        return Err(VzError::UnsupportedCombination("frame changes are defined for the direct-XY model".into()));
    };
    if new_frames.len() != frames.len() {
        return Err(VzError::DimensionMismatch(new_frames.len(), frames.len()));
    }
    let delta = |k: usize, t: f64| new_frames[k].eval_clamped(t) - frames[k].eval_clamped(t);
    let delta_rate = |k: usize, t: f64| new_frames[k].deriv_clamped(t) - frames[k].deriv_clamped(t);
    let mut layers = vec![];
    for l in &schedule.layers {
        let mut nl = l.clone();
        for (k, d) in nl.drives.iter_mut() {
            let (i, q) = (d.i.clone(), d.q.clone());
            let rot = |t: f64| DriveMap::Proper.rotate(i.eval_or_zero(t), q.eval_or_zero(t), delta(*k, t));
            d.i = SampledFunction::new(i.t0(), i.dt(), i.times().map(|t| rot(t).0).collect(), i.unit())?;
            d.q = SampledFunction::new(i.t0(), i.dt(), i.times().map(|t| rot(t).1).collect(), q.unit())?;
        }
        for k in 0..frames.len() {
            let grid = match nl.rz.get(&k) {
                Some(r) => r.clone(),
                None => {
                    let n = nl.drives.get(&k).map(|d| d.i.len()).unwrap_or(4097);
                    SampledFunction::from_fn(l.start, l.end, n, Unit::RadPerSec, |_| 0.0)?
                }
            };
            let shifted: Vec<f64> = grid
                .times()
                .zip(grid.samples())
                .map(|(t, r)| r - delta_rate(k, t))
                .collect();
            nl.rz.insert(k, SampledFunction::new(grid.t0(), grid.dt(), shifted, grid.unit())?);
        }
        layers.push(nl);
    }
    Ok((
        HardwareModel::DirectXY {
            frames: new_frames.to_vec(),
            couplings: couplings.clone(),
            idle_drift: idle_drift.clone(),
        },
        PulseSchedule {
            n_qubits: schedule.n_qubits,
            layers,
        },
    ))
}

/// Plans for [`chain_layers`] from a schedule.
pub fn layer_plans(model: &HardwareModel, schedule: &PulseSchedule) -> Result<Vec<LayerPlan>> {
    schedule.check_pairs()?;
    schedule
        .layers
        .iter()
        .map(|l| {
            let pairs = l
                .pairs
                .iter()
                .map(|p| {
                    Ok(PairPlan {
                        i: p.i.min(p.j),
                        j: p.i.max(p.j),
                        case: pair_case(model, p.i, p.j)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LayerPlan {
                span: (l.start, l.end),
                pairs,
            })
        })
        .collect()
}

/// The platform-independent compile: classify, chain, distort.
pub fn compile_generic(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    check_inputs(model, schedule, program)?;
    let drift = model.idle_drift();
    if program.is_zero() && drift.iter().all(|d| *d == 0.0) {
        return identity_compile(schedule, opts.chain.solve.min_nodes);
    }
    let frames = compile_frames(model)?;
    let plans = layer_plans(model, schedule)?;
    let chain = chain_layers(schedule.n_qubits, &plans, &frames, program, &drift, &opts.chain)?;
    let layers = distort(model, schedule, program, &chain)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("fixed_point_iters".into(), chain.fixed_point_iters as f64);
    diagnostics.insert("tau_start".into(), chain.span.0);
    diagnostics.insert("tau_end".into(), chain.span.1);
    let max_slope = chain
        .pieces
        .iter()
        .flatten()
        .map(|p| p.record.dfdtau.max_abs())
        .fold(0.0, f64::max);
    diagnostics.insert("max_dfdtau".into(), max_slope);
    let residual_z = chain.residual_mod();
    Ok(CompiledSchedule {
        schedule: PulseSchedule {
            n_qubits: schedule.n_qubits,
            layers,
        },
        dilations: chain.pieces,
        residual_z,
        layer_v0: chain.layer_offsets,
        idle: chain.idle,
        frames: None,
        diagnostics,
    })
}
