//! Bundled problem instances: the two-qubit spin example and its amplitude families, the
//! flux-tunable pair, a three-qubit layered schedule and randomised direct-XY cases.

use crate::classifier::basis_matrix;
use crate::error::Result;
use crate::linalg::CMat;
use crate::model::{
    CaseTag, CouplingModel, CouplingOperator, DriveTopology, HardwareModel, Layer, PairCoupling, PairPulse,
    PulseSchedule, Quadrature, VirtualZProgram,
};
use crate::sampled::{Phase, SampledFunction, Unit};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub name: String,
    pub model: HardwareModel,
    pub schedule: PulseSchedule,
    pub program: VirtualZProgram,
}

fn gaussian(t: f64, centre: f64, sigma: f64) -> f64 {
    (-0.5 * ((t - centre) / sigma).powi(2)).exp()
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinFamily {
    /// v proportional to (s - 1/2) exp(-((s - 1/2)/0.15)^2): the accumulated phase is a Gaussian.
    Gaussian,
    /// v proportional to sech^2((s - 1/2)/0.1): the accumulated phase is a tanh.
    Tanh,
}

impl SpinFamily {
    /// Unit-peak profile on s in [0, 1].
    pub fn profile(self, s: f64) -> f64 {
        match self {
            SpinFamily::Gaussian => {
                let peak = 0.15 / 2f64.sqrt() * (-0.5f64).exp();
                (s - 0.5) * (-((s - 0.5) / 0.15).powi(2)).exp() / peak
            }
            SpinFamily::Tanh => sech2((s - 0.5) / 0.1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SpinFamily::Gaussian => "gaussian",
            SpinFamily::Tanh => "tanh",
        }
    }
}

pub const SPIN_FREQS_GHZ: [f64; 2] = [18.0, 18.03];
pub const SPIN_J_MHZ: f64 = 10.0;
pub const SPIN_DRIVE_MHZ: f64 = 2.6;

/// Representative amplitudes (max |v| in units of the qubit detuning) used by the acceptance run.
pub fn spin_default_amplitude(family: SpinFamily) -> f64 {
    match family {
        SpinFamily::Gaussian => 0.5,
        SpinFamily::Tanh => 0.5,
    }
}

pub fn spin_model() -> HardwareModel {
    HardwareModel::SpinQubit {
        omega: SPIN_FREQS_GHZ.iter().map(|f| TWO_PI * f * 1e9).collect(),
        mu: vec![TWO_PI * SPIN_DRIVE_MHZ * 1e6; 2],
        topology: DriveTopology::Local,
        couplings: vec![],
    }
}

/// Gate time: one period of the detuning.
pub fn spin_duration() -> f64 {
    1.0 / ((SPIN_FREQS_GHZ[1] - SPIN_FREQS_GHZ[0]) * 1e9)
}

/// Two spin qubits with a Gaussian exchange pulse, a Gaussian X drive on qubit 0 and a virtual Z
/// pulse on qubit 0 whose peak is `amplitude` times the detuning.
pub fn spin_example(family: SpinFamily, amplitude: f64, nodes: usize) -> Result<Example> {
    let t = spin_duration();
    let dw = TWO_PI * (SPIN_FREQS_GHZ[1] - SPIN_FREQS_GHZ[0]) * 1e9;
    let mut layer = Layer::new(0.0, t);
    layer.pairs.push(PairPulse {
        i: 0,
        j: 1,
        coupling: SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, |x| {
            TWO_PI * SPIN_J_MHZ * 1e6 * gaussian(x, 0.5 * t, 0.3 * t)
        })?,
    });
    layer.drives.insert(
        0,
        Quadrature {
            i: SampledFunction::from_fn(0.0, t, nodes, Unit::Dimensionless, |x| gaussian(x, 0.5 * t, 0.3 * t))?,
            q: SampledFunction::constant(0.0, t, 0.0, Unit::Dimensionless)?,
        },
    );
    let program = VirtualZProgram {
        v: vec![
            SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, |x| amplitude * dw * family.profile(x / t))?,
            SampledFunction::constant(0.0, t, 0.0, Unit::RadPerSec)?,
        ],
        v0: vec![0.0, 0.0],
    };
    Ok(Example {
        name: format!("spin-{}-{amplitude}", family.label()),
        model: spin_model(),
        schedule: PulseSchedule {
            n_qubits: 2,
            layers: vec![layer],
        },
        program,
    })
}

pub const FLUX_T_NS: f64 = 50.0;
pub const FLUX_OMEGA_R_GHZ: f64 = 8.0;
pub const FLUX_AMPLITUDE_MHZ: f64 = 10.0;

pub fn flux_omega_i(t: f64) -> f64 {
    let _ = t;
    TWO_PI * 6.05e9
}

pub fn flux_omega_j(t: f64) -> f64 {
    TWO_PI * (5.95 + 0.05 * (-((t * 1e9 - 25.0) / 10.0).powi(2)).exp()) * 1e9
}

/// Flux-tunable pair on a bus resonator with a sech^2 difference virtual Z pulse on qubit i.
pub fn flux_example(nodes: usize) -> Result<Example> {
    let t = FLUX_T_NS * 1e-9;
    let omega_r = TWO_PI * FLUX_OMEGA_R_GHZ * 1e9;
    let cm = CouplingModel::BusResonator { omega_r };
    let target_j = TWO_PI * FLUX_AMPLITUDE_MHZ * 1e6;
    let g = target_j / cm.shape(flux_omega_i(0.0), flux_omega_j(0.0));
    let model = HardwareModel::FluxTunable {
        mu: vec![TWO_PI * FLUX_AMPLITUDE_MHZ * 1e6, 0.0],
        coupling_model: cm,
        g,
        couplings: vec![PairCoupling {
            i: 0,
            j: 1,
            op: CouplingOperator::from_paulis(&[("XX", 1.0)]),
        }],
    };
    let wi = SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, flux_omega_i)?;
    let wj = SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, flux_omega_j)?;
    let mut layer = Layer::new(0.0, t);
    layer.pairs.push(PairPulse {
        i: 0,
        j: 1,
        coupling: SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, |x| {
            g * cm.shape(flux_omega_i(x), flux_omega_j(x))
        })?,
    });
    layer.freqs.insert(0, wi);
    layer.freqs.insert(1, wj);
    layer.drives.insert(
        0,
        Quadrature {
            i: SampledFunction::from_fn(0.0, t, nodes, Unit::Dimensionless, |x| gaussian(x, 0.5 * t, 0.3 * t))?,
            q: SampledFunction::constant(0.0, t, 0.0, Unit::Dimensionless)?,
        },
    );
    let program = VirtualZProgram {
        v: vec![
            SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, |x| {
                TWO_PI * 0.3e9 * sech2((x * 1e9 - 25.0) / 2.5)
            })?,
            SampledFunction::constant(0.0, t, 0.0, Unit::RadPerSec)?,
        ],
        v0: vec![0.0, 0.0],
    };
    Ok(Example {
        name: "flux".into(),
        model,
        schedule: PulseSchedule {
            n_qubits: 2,
            layers: vec![layer],
        },
        program,
    })
}

/// Three direct-XY qubits in two layers: (0,1) with qubit 2 idle, then (1,2) with qubit 0 idle.
/// Every qubit has an idle drift so the chained offsets pick up idle phase.
pub fn three_qubit_example(nodes: usize) -> Result<Example> {
    let t = 50e-9;
    let mhz = TWO_PI * 1e6;
    let model = HardwareModel::DirectXY {
        frames: vec![Phase::linear(40.0 * mhz), Phase::linear(0.0), Phase::linear(-35.0 * mhz)],
        couplings: vec![
            PairCoupling {
                i: 0,
                j: 1,
                op: CouplingOperator::from_paulis(&[("XX", 0.5), ("YY", 0.5), ("ZZ", 0.2)]),
            },
            PairCoupling {
                i: 1,
                j: 2,
                op: CouplingOperator::from_paulis(&[("XX", 0.5), ("YY", 0.5)]),
            },
        ],
        idle_drift: vec![0.8 * mhz, -0.5 * mhz, 1.1 * mhz],
    };
    let env = |a: f64, b: f64, amp: f64| {
        SampledFunction::from_fn(a, b, nodes, Unit::RadPerSec, move |x| amp * gaussian(x, 0.5 * (a + b), 0.2 * (b - a)))
    };
    let mut l1 = Layer::new(0.0, t);
    l1.pairs.push(PairPulse {
        i: 0,
        j: 1,
        coupling: env(0.0, t, 8.0 * mhz)?,
    });
    l1.drives.insert(
        0,
        Quadrature {
            i: env(0.0, t, 6.0 * mhz)?,
            q: env(0.0, t, -3.0 * mhz)?,
        },
    );
    l1.drives.insert(
        2,
        Quadrature {
            i: env(0.0, t, 4.0 * mhz)?,
            q: env(0.0, t, 2.0 * mhz)?,
        },
    );
    let mut l2 = Layer::new(t, 2.0 * t);
    l2.pairs.push(PairPulse {
        i: 1,
        j: 2,
        coupling: env(t, 2.0 * t, 7.0 * mhz)?,
    });
    l2.drives.insert(
        1,
        Quadrature {
            i: env(t, 2.0 * t, 5.0 * mhz)?,
            q: env(t, 2.0 * t, 1.0 * mhz)?,
        },
    );
    l2.rz.insert(0, env(t, 2.0 * t, 2.0 * mhz)?);
    let program = VirtualZProgram {
        v: vec![
            SampledFunction::from_fn(0.0, 2.0 * t, 2 * nodes, Unit::RadPerSec, |x| {
                6.0 * mhz * gaussian(x, 0.3 * t, 0.15 * t)
            })?,
            SampledFunction::from_fn(0.0, 2.0 * t, 2 * nodes, Unit::RadPerSec, |x| {
                -5.0 * mhz * gaussian(x, 0.5 * t, 0.2 * t) + 4.0 * mhz * gaussian(x, 1.4 * t, 0.2 * t)
            })?,
            SampledFunction::from_fn(0.0, 2.0 * t, 2 * nodes, Unit::RadPerSec, |x| {
                3.0 * mhz * gaussian(x, 0.7 * t, 0.1 * t) - 6.0 * mhz * gaussian(x, 1.6 * t, 0.15 * t)
            })?,
        ],
        v0: vec![0.3, -0.7, 1.1],
    };
    Ok(Example {
        name: "three-qubit".into(),
        model,
        schedule: PulseSchedule {
            n_qubits: 3,
            layers: vec![l1, l2],
        },
        program,
    })
}

fn subspace_labels(tag: CaseTag) -> &'static [&'static str] {
    match tag {
        CaseTag::ZOnly => &[],
        CaseTag::ZCPlus => &["XX-YY", "XY+YX"],
        CaseTag::ZCMinus => &["XX+YY", "XY-YX"],
        CaseTag::ZQi => &["XI", "YI", "XZ", "YZ"],
        CaseTag::ZQj => &["IX", "IY", "ZX", "ZY"],
        CaseTag::General => &["XX", "IX", "XI"],
    }
}

/// A random two-qubit direct-XY case whose coupling lies in Z plus the subspace of `tag`.
/// Frame rates and virtual Z amplitudes keep the relevant phase combination strictly monotone.
pub fn random_direct_xy(tag: CaseTag, rng: &mut impl Rng, nodes: usize) -> Result<Example> {
    let mhz = TWO_PI * 1e6;
    let t = 50e-9;
    // Rates with |w_i|, |w_j|, |w_i - w_j|, |w_i + w_j| all at least 20 MHz.
    let (wi, wj) = loop {
        let a = rng.random_range(-90.0..90.0);
        let b = rng.random_range(-90.0..90.0);
        let ok = [a, b, a - b, a + b].iter().all(|x: &f64| x.abs() >= 20.0);
        if ok {
            break (a * mhz, b * mhz);
        }
    };
    let slowest = [wi, wj, wi - wj, wi + wj].iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let mut op = CMat::zeros(4);
    for l in ["ZI", "IZ", "ZZ"] {
        op.axpy(rng.random_range(-0.5..0.5), &basis_matrix(l));
    }
    for l in subspace_labels(tag) {
        op.axpy(rng.random_range(-1.0..1.0), &basis_matrix(l));
    }
    let model = HardwareModel::DirectXY {
        frames: vec![Phase::linear(wi), Phase::linear(wj)],
        couplings: vec![PairCoupling {
            i: 0,
            j: 1,
            op: CouplingOperator(op),
        }],
        idle_drift: vec![],
    };
    let bump = |amp: f64, c: f64, s: f64| {
        SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, move |x| amp * gaussian(x, c * t, s * t))
    };
    let mut layer = Layer::new(0.0, t);
    layer.pairs.push(PairPulse {
        i: 0,
        j: 1,
        coupling: bump(rng.random_range(2.0..10.0) * mhz, rng.random_range(0.4..0.6), rng.random_range(0.15..0.3))?,
    });
    for k in 0..2 {
        let c = rng.random_range(0.35..0.65);
        let s = rng.random_range(0.12..0.25);
        layer.drives.insert(
            k,
            Quadrature {
                i: bump(rng.random_range(-8.0..8.0) * mhz, c, s)?,
                q: bump(rng.random_range(-8.0..8.0) * mhz, c, s)?,
            },
        );
        if rng.random_bool(0.5) {
            layer.rz.insert(k, bump(rng.random_range(-4.0..4.0) * mhz, 0.5, 0.25)?);
        }
    }
    // Each v is bounded by a fifth of the slowest relevant rate, so any +/- combination stays monotone.
    let vmax = 0.2 * slowest;
    let mut v = vec![];
    for _ in 0..2 {
        let (a1, a2) = (rng.random_range(-0.5..0.5) * vmax, rng.random_range(-0.5..0.5) * vmax);
        let (c1, c2) = (rng.random_range(0.2..0.5), rng.random_range(0.5..0.8));
        v.push(SampledFunction::from_fn(0.0, t, nodes, Unit::RadPerSec, move |x| {
            a1 * gaussian(x, c1 * t, 0.1 * t) + a2 * gaussian(x, c2 * t, 0.12 * t)
        })?);
    }
    let v0 = vec![rng.random_range(0.0..TWO_PI), rng.random_range(0.0..TWO_PI)];
    Ok(Example {
        name: format!("direct-xy-{}", tag.label()),
        model,
        schedule: PulseSchedule {
            n_qubits: 2,
            layers: vec![layer],
        },
        program: VirtualZProgram { v, v0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_have_unit_peak() {
        for fam in [SpinFamily::Gaussian, SpinFamily::Tanh] {
            let peak = (0..=10000).map(|k| fam.profile(k as f64 / 1e4).abs()).fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-6, "{fam:?} {peak}");
        }
    }

    #[test]
    fn flux_coupling_starts_at_ten_mhz() {
        let ex = flux_example(1001).unwrap();
        let j0 = ex.schedule.layers[0].pairs[0].coupling.eval(0.0).unwrap();
        assert!((j0 - TWO_PI * 1e7).abs() < 1e-3);
    }

    #[test]
    fn examples_validate() {
        for ex in [
            spin_example(SpinFamily::Tanh, 0.3, 1001).unwrap(),
            flux_example(1001).unwrap(),
            three_qubit_example(1001).unwrap(),
        ] {
            ex.model.validate().unwrap();
            ex.schedule.validate().unwrap();
            ex.program.validate().unwrap();
        }
    }
}
