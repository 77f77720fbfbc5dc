//! Cross-resonance superconducting qubits: no dilation, drives rotate with the target's phase.

use super::{compile_generic, CompileOptions};
use crate::error::{Result, VzError};
use crate::model::{CompiledSchedule, HardwareModel, PulseSchedule, VirtualZProgram};

pub fn compile_cross_resonance(
    model: &HardwareModel,
    schedule: &PulseSchedule,
    program: &VirtualZProgram,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    if !matches!(model, HardwareModel::CrossResonance { .. }) {
        return Err(VzError::UnsupportedCombination(format!(
            "compile_cross_resonance on a {} model",
            model.tag()
        )));
    }
    if schedule.layers.iter().any(|l| !l.pairs.is_empty()) {
        return Err(VzError::Validation(
            "cross-resonance schedules carry their interaction in the cr drives, not in pairs".into(),
        ));
    }
    compile_generic(model, schedule, program, opts)
}
