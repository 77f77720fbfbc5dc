//! Spin qubits with Heisenberg exchange.

use super::{compile_generic, pair_case, CompileOptions};
use crate::error::{Result, VzError};
use crate::model::{CaseTag, CompiledSchedule, HardwareModel, PulseSchedule, VirtualZProgram};

pub fn compile_spin(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    let HardwareModel::SpinQubit { omega, .. } = model else {
        return Err(VzError::UnsupportedCombination(format!("compile_spin on a {} model", model.tag())));
    };
    for l in &schedule.layers {
        for p in &l.pairs {
            match pair_case(model, p.i, p.j)? {
                CaseTag::ZOnly => {}
                CaseTag::ZCMinus => {
                    if omega[p.i] == omega[p.j] {
                        return Err(VzError::DegenerateFrequencies(format!(
                            "qubits {} and {} share the frequency {}",
                            p.i, p.j, omega[p.i]
                        )));
                    }
                }
                c => {
                    return Err(VzError::UnsupportedCombination(format!(
                        "spin coupling ({}, {}) is {} after the RWA; expected Z or Z+C-",
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
