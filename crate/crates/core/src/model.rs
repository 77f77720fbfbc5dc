//! Domain types shared by every stage of the pipeline.

use crate::error::{Result, VzError};
use crate::linalg::{pauli, CMat, C64};
use crate::sampled::{accumulate_phase, Phase, SampledFunction, Unit};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Per-qubit virtual Z envelopes v_i (rad/s) and initial offsets V_i0 (rad).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualZProgram {
    pub v: Vec<SampledFunction>,
    #[serde(default)]
    pub v0: Vec<f64>,
}

impl VirtualZProgram {
    pub fn zero(n: usize, t0: f64, t1: f64) -> Self {
        VirtualZProgram {
            v: (0..n)
                .map(|_| SampledFunction::constant(t0, t1, 0.0, Unit::RadPerSec).expect("valid span"))
                .collect(),
            v0: vec![0.0; n],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.v.is_empty() {
            return Err(VzError::Validation("program has no qubits".into()));
        }
        if !self.v0.is_empty() && self.v0.len() != self.v.len() {
            return Err(VzError::Validation("v0 length differs from number of envelopes".into()));
        }
        let (a, b) = self.v[0].domain();
        for (k, e) in self.v.iter().enumerate() {
            let (c, d) = e.domain();
            let tol = 1e-9 * (b - a);
            if (c - a).abs() > tol || (d - b).abs() > tol {
                return Err(VzError::Domain(format!("v[{k}] spans [{c}, {d}], expected [{a}, {b}]")));
            }
        }
        Ok(())
    }

    pub fn offset(&self, k: usize) -> f64 {
        self.v0.get(k).copied().unwrap_or(0.0)
    }

    /// V_k(t) = V_k0 + integral of v_k.
    pub fn accumulated(&self, k: usize) -> SampledFunction {
        accumulate_phase(&self.v[k], self.offset(k))
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|e| e.is_zero()) && self.v0.iter().all(|x| *x == 0.0)
    }

    pub fn span(&self) -> (f64, f64) {
        self.v[0].domain()
    }
}

/// Two-qubit coupling operator E_ij(0) in the basis |00>, |01>, |10>, |11> of (i, j), i < j.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingOperator(pub CMat);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CouplingJson {
    Pauli { pauli: BTreeMap<String, f64> },
    Dense { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl Serialize for CouplingOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = BTreeMap::new();
        for a in ['I', 'X', 'Y', 'Z'] {
            for b in ['I', 'X', 'Y', 'Z'] {
                let name: String = [a, b].iter().collect();
                let p = pauli::string(&name);
                let c = (&p * &self.0).trace().re / 4.0;
                if c.abs() > 1e-15 {
                    map.insert(name, c);
                }
            }
        }
        CouplingJson::Pauli { pauli: map }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CouplingOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        match CouplingJson::deserialize(d)? {
            CouplingJson::Pauli { pauli } => {
                let mut m = CMat::zeros(4);
                for (name, c) in pauli {
                    if name.len() != 2 || !name.chars().all(|ch| "IXYZ".contains(ch)) {
                        return Err(D::Error::custom(format!("bad Pauli label '{name}'")));
                    }
                    m.axpy(c, &pauli::string(&name));
                }
                Ok(CouplingOperator(m))
            }
            CouplingJson::Dense { re, im } => {
                if re.len() != 4 || im.len() != 4 || re.iter().chain(&im).any(|r| r.len() != 4) {
                    return Err(D::Error::custom("dense coupling operator must be 4x4"));
                }
                let mut m = CMat::zeros(4);
                for r in 0..4 {
                    for c in 0..4 {
                        m.set(r, c, C64::new(re[r][c], im[r][c]));
                    }
                }
                let op = CouplingOperator(m);
                op.validate().map_err(D::Error::custom)?;
                Ok(op)
            }
        }
    }
}

impl CouplingOperator {
    pub fn from_paulis(terms: &[(&str, f64)]) -> Self {
        let mut m = CMat::zeros(4);
        for (name, c) in terms {
            m.axpy(*c, &pauli::string(name));
        }
        CouplingOperator(m)
    }

    /// (XX + YY + ZZ) / 4, the spin-qubit exchange operator including its 1/4 prefactor.
    pub fn heisenberg_quarter() -> Self {
        Self::from_paulis(&[("XX", 0.25), ("YY", 0.25), ("ZZ", 0.25)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.dim() != 4 {
            return Err(VzError::DimensionMismatch(self.0.dim(), 4));
        }
        let e = self.0.hermiticity_error();
        if e > 1e-12 * self.0.frob_norm().max(1.0) {
            return Err(VzError::NonHermitian(e));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DriveTopology {
    #[default]
    Local,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CouplingModel {
    /// J = g * sqrt(w_i w_j)
    DirectCapacitive,
    /// J = g * [1/(w_i - w_r) + 1/(w_j - w_r)]
    BusResonator { omega_r: f64 },
}

impl CouplingModel {
    /// Coupling shape without the strength g.
    pub fn shape(&self, wi: f64, wj: f64) -> f64 {
        match self {
            CouplingModel::DirectCapacitive => (wi * wj).sqrt(),
            CouplingModel::BusResonator { omega_r } => 1.0 / (wi - omega_r) + 1.0 / (wj - omega_r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub i: usize,
    pub j: usize,
    pub op: CouplingOperator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum HardwareModel {
    /// H = -1/2 sum w_k Z_k - sum Omega_k X_k + sum J E(0), Omega_k = mu_k [I cos w t + Q sin w t].
    SpinQubit {
        omega: Vec<f64>,
        mu: Vec<f64>,
        #[serde(default)]
        topology: DriveTopology,
        #[serde(default)]
        couplings: Vec<PairCoupling>,
    },
    /// H = 1/2 sum w_k Z_k + sum Omega_k Y_k + sum J E(0).
    TunableCoupler {
        omega: Vec<f64>,
        mu: Vec<f64>,
        #[serde(default)]
        topology: DriveTopology,
        #[serde(default)]
        couplings: Vec<PairCoupling>,
    },
    /// H = 1/2 sum w~_k(t) Z_k + sum Omega_k Y_k + J(w~) E(0), with J = g * shape(w~_i, w~_j).
    FluxTunable {
        mu: Vec<f64>,
        coupling_model: CouplingModel,
        g: f64,
        #[serde(default)]
        couplings: Vec<PairCoupling>,
    },
    /// H = -1/2 sum w_k Z_k + sum_i Omega_i sum_j [nu_ij X_j + mu_ij Z_i X_j].
    CrossResonance {
        omega: Vec<f64>,
        nu: Vec<Vec<f64>>,
        mu_cr: Vec<Vec<f64>>,
    },
    /// Rotating-frame test model with direct controls: H = sum 1/2 (I X + Q Y + (rz + drift) Z) + sum J E(t).
    #[serde(rename = "direct-xy", alias = "direct-x-y")]
    DirectXY {
        frames: Vec<Phase>,
        #[serde(default)]
        couplings: Vec<PairCoupling>,
        #[serde(default)]
        idle_drift: Vec<f64>,
    },
}

impl HardwareModel {
    pub fn n_qubits(&self) -> usize {
        match self {
            HardwareModel::SpinQubit { omega, .. }
            | HardwareModel::TunableCoupler { omega, .. }
            | HardwareModel::CrossResonance { omega, .. } => omega.len(),
            HardwareModel::FluxTunable { mu, .. } => mu.len(),
            HardwareModel::DirectXY { frames, .. } => frames.len(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            HardwareModel::SpinQubit { .. } => "spin",
            HardwareModel::TunableCoupler { .. } => "tc",
            HardwareModel::FluxTunable { .. } => "flux",
            HardwareModel::CrossResonance { .. } => "cr",
            HardwareModel::DirectXY { .. } => "direct-xy",
        }
    }

    /// Coupling operator of pair (i, j), i < j.
    pub fn coupling_op(&self, i: usize, j: usize) -> Result<CouplingOperator> {
        let (i, j) = (i.min(j), i.max(j));
        let list = match self {
            HardwareModel::SpinQubit { couplings, .. }
            | HardwareModel::TunableCoupler { couplings, .. }
            | HardwareModel::FluxTunable { couplings, .. }
            | HardwareModel::DirectXY { couplings, .. } => couplings,
            HardwareModel::CrossResonance { .. } => {
                return Err(VzError::UnsupportedCombination("cross-resonance has no pair couplings".into()))
            }
        };
        if let Some(c) = list.iter().find(|c| c.i.min(c.j) == i && c.i.max(c.j) == j) {
            return Ok(c.op.clone());
        }
        match self {
            HardwareModel::SpinQubit { .. } => Ok(CouplingOperator::heisenberg_quarter()),
            HardwareModel::TunableCoupler { .. } | HardwareModel::FluxTunable { .. } => {
                Ok(CouplingOperator::from_paulis(&[("XX", 1.0)]))
            }
            _ => Err(VzError::Validation(format!("no coupling operator for pair ({i}, {j})"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits();
        if n == 0 {
            return Err(VzError::Validation("model has no qubits".into()));
        }
        match self {
            HardwareModel::SpinQubit { omega, mu, couplings, .. }
            | HardwareModel::TunableCoupler { omega, mu, couplings, .. } => {
                if mu.len() != omega.len() {
                    return Err(VzError::Validation("mu and omega lengths differ".into()));
                }
                for c in couplings {
                    c.op.validate()?;
                }
            }
            HardwareModel::FluxTunable { couplings, g, .. } => {
                if !g.is_finite() {
                    return Err(VzError::Validation("coupling strength g must be finite".into()));
                }
                for c in couplings {
                    c.op.validate()?;
                }
            }
            HardwareModel::CrossResonance { omega, nu, mu_cr } => {
                let n = omega.len();
                if nu.len() != n || mu_cr.len() != n || nu.iter().chain(mu_cr).any(|r| r.len() != n) {
                    return Err(VzError::Validation("nu and mu_cr must be n x n".into()));
                }
                for k in 0..n {
                    if (nu[k][k] - 1.0).abs() > 1e-12 || mu_cr[k][k].abs() > 1e-12 {
                        return Err(VzError::Validation("cross-resonance requires nu_ii = 1 and mu_ii = 0".into()));
                    }
                }
            }
            HardwareModel::DirectXY { couplings, idle_drift, .. } => {
                if !idle_drift.is_empty() && idle_drift.len() != n {
                    return Err(VzError::Validation("idle_drift length differs from qubit count".into()));
                }
                for c in couplings {
                    c.op.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Frame phases of the model's natural rotating frame (None for flux, whose frames follow the schedule).
    pub fn frames(&self) -> Option<Vec<Phase>> {
        match self {
            HardwareModel::SpinQubit { omega, .. } | HardwareModel::CrossResonance { omega, .. } => {
                Some(omega.iter().map(|w| Phase::linear(-w)).collect())
            }
            HardwareModel::TunableCoupler { omega, .. } => Some(omega.iter().map(|w| Phase::linear(*w)).collect()),
            HardwareModel::DirectXY { frames, .. } => Some(frames.clone()),
            HardwareModel::FluxTunable { .. } => None,
        }
    }

    pub fn idle_drift(&self) -> Vec<f64> {
        match self {
            HardwareModel::DirectXY { idle_drift, .. } if !idle_drift.is_empty() => idle_drift.clone(),
            _ => vec![0.0; self.n_qubits()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub i: SampledFunction,
    pub q: SampledFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPulse {
    pub i: usize,
    pub j: usize,
    pub coupling: SampledFunction,
}

/// Cross-resonance drive on `control` at the frequency of `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrDrive {
    pub control: usize,
    pub target: usize,
    pub i: SampledFunction,
    pub q: SampledFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub pairs: Vec<PairPulse>,
    #[serde(default)]
    pub drives: BTreeMap<usize, Quadrature>,
    /// Flux-tunable qubit frequency trajectories (rad/s).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub freqs: BTreeMap<usize, SampledFunction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cr: Vec<CrDrive>,
    /// Direct Z controls of the DirectXY test model.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rz: BTreeMap<usize, SampledFunction>,
}

impl Layer {
    pub fn new(start: f64, end: f64) -> Self {
        Layer {
            start,
            end,
            pairs: vec![],
            drives: BTreeMap::new(),
            freqs: BTreeMap::new(),
            cr: vec![],
            rz: BTreeMap::new(),
        }
    }

    pub fn partner(&self, k: usize) -> Option<usize> {
        self.pairs.iter().find_map(|p| {
            if p.i == k {
                Some(p.j)
            } else if p.j == k {
                Some(p.i)
            } else {
                None
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub n_qubits: usize,
    pub layers: Vec<Layer>,
}

impl PulseSchedule {
    pub fn span(&self) -> (f64, f64) {
        (
            self.layers.first().map(|l| l.start).unwrap_or(0.0),
            self.layers.last().map(|l| l.end).unwrap_or(0.0),
        )
    }

    /// Pairwise-disjointness of every layer.
    pub fn check_pairs(&self) -> Result<()> {
        for (li, layer) in self.layers.iter().enumerate() {
            let mut seen = vec![false; self.n_qubits];
            for p in &layer.pairs {
                if p.i == p.j || p.i >= self.n_qubits || p.j >= self.n_qubits {
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

    /// Full validation of an input schedule: disjoint pairs, contiguous spans, envelopes on the span.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(VzError::Validation("schedule has no layers".into()));
        }
        self.check_pairs()?;
        for (li, l) in self.layers.iter().enumerate() {
            if !(l.end > l.start) {
                return Err(VzError::Validation(format!("layer {li} has empty span")));
            }
            if li > 0 {
                let prev = self.layers[li - 1].end;
                if (l.start - prev).abs() > 1e-12 * (l.end - l.start).max(prev.abs()) {
                    return Err(VzError::Validation(format!("layer {li} does not start where layer {} ends", li - 1)));
                }
            }
            let covers = |f: &SampledFunction, what: &str| -> Result<()> {
                if f.contains(l.start) && f.contains(l.end) {
                    Ok(())
                } else {
                    Err(VzError::Domain(format!("{what} in layer {li} does not cover [{}, {}]", l.start, l.end)))
                }
            };
            for p in &l.pairs {
                covers(&p.coupling, "coupling envelope")?;
            }
            for (k, d) in &l.drives {
                if *k >= self.n_qubits {
                    return Err(VzError::Validation(format!("drive on unknown qubit {k}")));
                }
                covers(&d.i, "I envelope")?;
                covers(&d.q, "Q envelope")?;
            }
            for f in l.freqs.values().chain(l.rz.values()) {
                covers(f, "frequency/z envelope")?;
            }
            for c in &l.cr {
                covers(&c.i, "CR I envelope")?;
                covers(&c.q, "CR Q envelope")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseTag {
    ZOnly,
    ZCPlus,
    ZCMinus,
    ZQi,
    ZQj,
    General,
}

impl CaseTag {
    pub fn label(&self) -> &'static str {
        match self {
            CaseTag::ZOnly => "Z-only",
            CaseTag::ZCPlus => "Z+C+",
            CaseTag::ZCMinus => "Z+C-",
            CaseTag::ZQi => "Z+Q_i",
            CaseTag::ZQj => "Z+Q_j",
            CaseTag::General => "general",
        }
    }

    /// Coefficients (s_i, s_j) of the phase combination that enters the scalar equation.
    pub fn combination(&self) -> Option<(f64, f64)> {
        match self {
            CaseTag::ZCPlus => Some((1.0, 1.0)),
            CaseTag::ZCMinus => Some((1.0, -1.0)),
            CaseTag::ZQi => Some((1.0, 0.0)),
            CaseTag::ZQj => Some((0.0, 1.0)),
            CaseTag::ZOnly | CaseTag::General => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationRecord {
    /// f: tau -> t on the tau grid.
    pub f: SampledFunction,
    pub dfdtau: SampledFunction,
    pub branch: i64,
    pub case: CaseTag,
    /// Max composition residual of the defining equation (rad, mod 4 pi).
    pub residual: f64,
}

impl DilationRecord {
    pub fn tau0(&self) -> f64 {
        self.f.t0()
    }
    pub fn tau1(&self) -> f64 {
        self.f.t_end()
    }

    pub fn identity(a: f64, b: f64, n: usize, case: CaseTag) -> Result<Self> {
        let f = SampledFunction::from_fn(a, b, n, Unit::Seconds, |t| t)?;
        let ones = vec![1.0; f.len()];
        let f = SampledFunction::hermite(f.t0(), f.dt(), f.samples().to_vec(), ones.clone(), Unit::Seconds)?;
        let dfdtau = SampledFunction::new(a, f.dt(), ones, Unit::Dimensionless)?;
        Ok(DilationRecord {
            f,
            dfdtau,
            branch: 0,
            case,
            residual: 0.0,
        })
    }

    /// Pure time shift f(tau) = tau - s mapping [a + s, b + s] onto [a, b].
    pub fn shift(a: f64, b: f64, s: f64, n: usize, case: CaseTag) -> Result<Self> {
        let mut r = Self::identity(a + s, b + s, n, case)?;
        let samples: Vec<f64> = r.f.times().map(|t| t - s).collect();
        r.f = SampledFunction::hermite(r.f.t0(), r.f.dt(), samples, vec![1.0; r.f.len()], Unit::Seconds)?;
        Ok(r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceDilation {
    pub qubits: Vec<usize>,
    pub record: DilationRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledSchedule {
    pub schedule: PulseSchedule,
    /// Per layer, one record per pair or solo qubit.
    pub dilations: Vec<Vec<PieceDilation>>,
    /// V_i(T) of the final layer, reduced modulo 4 pi.
    pub residual_z: Vec<f64>,
    /// V_i0 used for each layer.
    pub layer_v0: Vec<Vec<f64>>,
    /// Per qubit, compiled-time spans with all drives off.
    pub idle: Vec<Vec<(f64, f64)>>,
    /// Frame phases of the compiled schedule when they differ from the model's (flux).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<Phase>>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl CompiledSchedule {
    pub fn residual_raw(&self) -> &[f64] {
        &self.residual_z
    }
}

/// Reduce a phase into [0, 4 pi).
pub fn mod_4pi(x: f64) -> f64 {
    let r = x.rem_euclid(4.0 * PI);
    // rem_euclid rounds tiny negative inputs up to exactly 4 pi.
    if r >= 4.0 * PI {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(a: f64, b: f64) -> SampledFunction {
        SampledFunction::constant(a, b, 1.0, Unit::RadPerSec).unwrap()
    }

    #[test]
    fn mod_4pi_range() {
        assert_eq!(mod_4pi(-1e-17), 0.0);
        assert_eq!(mod_4pi(4.0 * PI), 0.0);
        assert!((mod_4pi(5.0 * PI) - PI).abs() < 1e-12);
        assert!((mod_4pi(-PI) - 3.0 * PI).abs() < 1e-12);
        for x in [-100.0, -3.3, 0.0, 2.0, 1e4] {
            let r = mod_4pi(x);
            assert!((0.0..4.0 * PI).contains(&r));
        }
    }

    #[test]
    fn layers_reject_shared_qubits() {
        let mut l = Layer::new(0.0, 1.0);
        l.pairs.push(PairPulse { i: 0, j: 1, coupling: env(0.0, 1.0) });
        l.pairs.push(PairPulse { i: 1, j: 2, coupling: env(0.0, 1.0) });
        let s = PulseSchedule { n_qubits: 3, layers: vec![l] };
        assert!(matches!(s.validate(), Err(VzError::InconsistentLayer { layer: 0, qubit: 1 })));
    }

    #[test]
    fn layers_must_be_contiguous_and_covered() {
        let mut a = Layer::new(0.0, 1.0);
        a.pairs.push(PairPulse { i: 0, j: 1, coupling: env(0.0, 1.0) });
        let b = Layer::new(1.5, 2.0);
        let s = PulseSchedule { n_qubits: 2, layers: vec![a.clone(), b] };
        assert!(s.validate().is_err());
        let mut c = Layer::new(1.0, 2.0);
        c.pairs.push(PairPulse { i: 0, j: 1, coupling: env(1.0, 1.5) });
        let s = PulseSchedule { n_qubits: 2, layers: vec![a.clone(), c] };
        assert!(matches!(s.validate(), Err(VzError::Domain(_))));
        let s = PulseSchedule { n_qubits: 2, layers: vec![a] };
        assert!(s.validate().is_ok());
    }

    #[test]
    fn program_checks_domains_and_accumulates() {
        let p = VirtualZProgram { v: vec![env(0.0, 2.0), env(0.0, 3.0)], v0: vec![] };
        assert!(matches!(p.validate(), Err(VzError::Domain(_))));
        let p = VirtualZProgram { v: vec![env(0.0, 2.0)], v0: vec![0.5] };
        p.validate().unwrap();
        assert!((p.accumulated(0).eval(2.0).unwrap() - 2.5).abs() < 1e-15);
        assert!(VirtualZProgram::zero(3, 0.0, 1.0).is_zero());
    }

    #[test]
    fn coupling_operator_must_be_hermitian() {
        assert!(CouplingOperator::heisenberg_quarter().validate().is_ok());
        let mut m = CMat::zeros(4);
        m.set(0, 1, C64::new(1.0, 0.0));
        assert!(matches!(CouplingOperator(m).validate(), Err(VzError::NonHermitian(_))));
        assert!(CouplingOperator(CMat::identity(2)).validate().is_err());
    }

    #[test]
    fn cross_resonance_diagonal_constraints() {
        let good = HardwareModel::CrossResonance {
            omega: vec![1.0, 2.0],
            nu: vec![vec![1.0, 0.1], vec![0.2, 1.0]],
            mu_cr: vec![vec![0.0, 0.3], vec![0.4, 0.0]],
        };
        assert!(good.validate().is_ok());
        let bad = HardwareModel::CrossResonance {
            omega: vec![1.0, 2.0],
            nu: vec![vec![0.9, 0.1], vec![0.2, 1.0]],
            mu_cr: vec![vec![0.0, 0.3], vec![0.4, 0.0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bus_and_capacitive_shapes() {
        let c = CouplingModel::DirectCapacitive;
        assert!((c.shape(4.0, 9.0) - 6.0).abs() < 1e-15);
        let b = CouplingModel::BusResonator { omega_r: 8.0 };
        assert!((b.shape(6.0, 7.0) - (-0.5 - 1.0)).abs() < 1e-15);
    }
}
