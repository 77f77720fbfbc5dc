//! Superconducting qubits with tunable couplers.

use super::{compile_generic, pair_case, CompileOptions};
use crate::error::{Result, VzError};
use crate::model::{CaseTag, CompiledSchedule, HardwareModel, PulseSchedule, VirtualZProgram};

/// Longitudinal couplings need no dilation; transversal ones are dilated on the C- combination.
pub fn compile_tunable_coupler(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    let HardwareModel::TunableCoupler { omega, .. } = model else {
        return Err(VzError::UnsupportedCombination(format!(
            "compile_tunable_coupler on a {} model",
            model.tag()
        )));
    };
    for l in &schedule.layers {
        for p in &l.pairs {
            match pair_case(model, p.i, p.j)? {
                CaseTag::ZOnly => {}
                CaseTag::ZCMinus if omega[p.i] != omega[p.j] => {}
                CaseTag::ZCMinus => {
                    return Err(VzError::DegenerateFrequencies(format!("qubits {} and {}", p.i, p.j)));
                }
                c => {
                    return Err(VzError::UnsupportedCombination(format!(
                        "tunable-coupler coupling ({}, {}) is {} after the RWA",
                        p.i,
                        p.j,
                        c.label()
                    )))
                }
            }
        }
    }
    compile_generic(model, schedule, program, opts)
}
