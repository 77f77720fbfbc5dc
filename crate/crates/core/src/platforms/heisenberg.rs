//! Driving spin qubits toward a target Heisenberg Hamiltonian written in the average rotating frame:
//! H = -1/2 sum_k B_k . sigma_k + sum J_ij (XX + YY + ZZ)/4.
//!
//! Each qubit is driven in its own frame `-w_k t`; the offset `d_k = (w_k - w_avg) t` between the two
//! frames is absorbed by rotating the field's transverse part, and its rate goes into the virtual Z
//! program together with `-B_z`.

use crate::error::{Result, VzError};
use crate::model::{HardwareModel, Layer, PairPulse, PulseSchedule, Quadrature, VirtualZProgram};
use crate::sampled::{Phase, SampledFunction, Unit};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTarget {
    pub start: f64,
    pub end: f64,
    /// Per qubit (B_x, B_y, B_z) in rad/s; missing components are zero.
    pub bx: Vec<Option<SampledFunction>>,
    pub by: Vec<Option<SampledFunction>>,
    pub bz: Vec<Option<SampledFunction>>,
    pub couplings: Vec<(usize, usize, SampledFunction)>,
    pub nodes: usize,
}

impl FieldTarget {
    pub fn empty(n: usize, start: f64, end: f64, nodes: usize) -> Self {
        FieldTarget {
            start,
            end,
            bx: vec![None; n],
            by: vec![None; n],
            bz: vec![None; n],
            couplings: vec![],
            nodes,
        }
    }
}

/// Frame phase of the average rotating frame.
pub fn average_frame(model: &HardwareModel) -> Result<Phase> {
    let HardwareModel::SpinQubit { omega, .. } = model else {
        return Err(VzError::UnsupportedCombination("Heisenberg targets need a spin-qubit model".into()));
    };
    Ok(Phase::linear(-omega.iter().sum::<f64>() / omega.len() as f64))
}

/// Drives, couplings and virtual Z program that realise the target in the average frame.
pub fn compile_heisenberg_target(model: &HardwareModel, target: &FieldTarget) -> Result<(PulseSchedule, VirtualZProgram)> {
    model.validate()?;
    let HardwareModel::SpinQubit { omega, mu, .. } = model else {
        return Err(VzError::UnsupportedCombination("Heisenberg targets need a spin-qubit model".into()));
    };
    let n = omega.len();
    if target.bx.len() != n || target.by.len() != n || target.bz.len() != n {
        return Err(VzError::DimensionMismatch(target.bx.len(), n));
    }
    if !(target.end > target.start) || target.nodes < 2 {
        return Err(VzError::Validation("target needs a positive span and at least two nodes".into()));
    }
    let avg = omega.iter().sum::<f64>() / n as f64;
    let (a, b, m) = (target.start, target.end, target.nodes);
    let comp = |f: &Option<SampledFunction>, t: f64| f.as_ref().map(|f| f.eval_or_zero(t)).unwrap_or(0.0);
    let mut layer = Layer::new(a, b);
    let mut v = Vec::with_capacity(n);
    for k in 0..n {
        let dw = omega[k] - avg;
        let has_xy = target.bx[k].is_some() || target.by[k].is_some();
        if has_xy {
            if mu[k] == 0.0 {
                return Err(VzError::Validation(format!("qubit {k} has a transverse field but no drive")));
            }
            let (bx, by) = (&target.bx[k], &target.by[k]);
            let i = SampledFunction::from_fn(a, b, m, Unit::Dimensionless, |t| {
                let (s, c) = (dw * t).sin_cos();
                (comp(bx, t) * c - comp(by, t) * s) / mu[k]
            })?;
            let q = SampledFunction::from_fn(a, b, m, Unit::Dimensionless, |t| {
                let (s, c) = (dw * t).sin_cos();
                (comp(bx, t) * s + comp(by, t) * c) / mu[k]
            })?;
            layer.drives.insert(k, Quadrature { i, q });
        }
        let bz = &target.bz[k];
        v.push(SampledFunction::from_fn(a, b, m, Unit::RadPerSec, |t| dw - comp(bz, t))?);
    }
    for (i, j, c) in &target.couplings {
        layer.pairs.push(PairPulse {
            i: *i.min(j),
            j: *i.max(j),
            coupling: c.clone(),
        });
    }
    let schedule = PulseSchedule {
        n_qubits: n,
        layers: vec![layer],
    };
    schedule.validate()?;
    let program = VirtualZProgram { v, v0: vec![0.0; n] };
    program.validate()?;
    Ok((schedule, program))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DriveTopology;

    fn spin2() -> HardwareModel {
        HardwareModel::SpinQubit {
            omega: vec![2.0e9, 2.2e9],
            mu: vec![1.0e7, 1.0e7],
            topology: DriveTopology::Local,
            couplings: vec![],
        }
    }

    #[test]
    fn zero_field_programs_frame_offsets() {
        let t = FieldTarget::empty(2, 0.0, 1e-7, 101);
        let (s, p) = compile_heisenberg_target(&spin2(), &t).unwrap();
        assert!(s.layers[0].drives.is_empty());
        assert!((p.v[0].eval(5e-8).unwrap() + 1.0e8).abs() < 1e-3);
        assert!((p.v[1].eval(5e-8).unwrap() - 1.0e8).abs() < 1e-3);
    }

    #[test]
    fn transverse_field_splits_into_quadratures() {
        let mut t = FieldTarget::empty(2, 0.0, 1e-7, 201);
        t.bx[1] = Some(SampledFunction::constant(0.0, 1e-7, 3e6, Unit::RadPerSec).unwrap());
        let (s, _) = compile_heisenberg_target(&spin2(), &t).unwrap();
        let d = &s.layers[0].drives[&1];
        for tt in [0.0, 2.5e-8, 7.7e-8] {
            let (i, q) = (d.i.eval(tt).unwrap(), d.q.eval(tt).unwrap());
            assert!((i.hypot(q) - 0.3).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_other_models() {
        let m = HardwareModel::TunableCoupler {
            omega: vec![1.0],
            mu: vec![1.0],
            topology: DriveTopology::Local,
            couplings: vec![],
        };
        assert!(compile_heisenberg_target(&m, &FieldTarget::empty(1, 0.0, 1.0, 3)).is_err());
    }
}
