//! Shared fixtures for the criterion benches.

use vzpulse_core::dilation::{DilationProblem, SolveOptions};
use vzpulse_core::examples::{spin_example, three_qubit_example, Example, SpinFamily};
use vzpulse_core::{CaseTag, Phase, SampledFunction, Unit};

pub fn spin_case(nodes: usize) -> Example {
    spin_example(SpinFamily::Tanh, 0.5, nodes).expect("spin example")
}

pub fn chained_case(nodes: usize) -> Example {
    three_qubit_example(nodes).expect("three-qubit example")
}

/// A Z+C- problem with a smooth virtual phase on qubit i.
pub fn dilation_problem(nodes: usize) -> DilationProblem {
    let mhz = 2.0 * std::f64::consts::PI * 1e6;
    let t = 50e-9;
    let v = SampledFunction::from_fn(0.0, t, nodes, Unit::Radians, |x| 0.8 * (-((x / t - 0.5) / 0.2).powi(2)).exp())
        .expect("grid");
    DilationProblem {
        case: CaseTag::ZCMinus,
        phi_i: Phase::linear(40.0 * mhz),
        phi_j: Phase::linear(-10.0 * mhz),
        big_v_i: v,
        big_v_j: SampledFunction::constant(0.0, t, 0.0, Unit::Radians).expect("grid"),
        branch: 0,
        span: (0.0, t),
    }
}

pub fn solve_options() -> SolveOptions {
    SolveOptions::default()
}

/// A Gaussian-enveloped carrier for the I/Q codec.
pub fn carrier_drive(nodes: usize) -> SampledFunction {
    let w = 2.0 * std::f64::consts::PI * 1e9;
    SampledFunction::from_fn(0.0, 400e-9, nodes, Unit::RadPerSec, |t| {
        (-0.5 * ((t - 200e-9) / 60e-9).powi(2)).exp() * (w * t).cos()
    })
    .expect("grid")
}
