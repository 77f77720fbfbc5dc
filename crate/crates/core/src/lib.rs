//! Virtual Z pulse compilation: time dilations, distorted controls for spin, tunable-coupler,
//! flux-tunable and cross-resonance hardware, I/Q codec, and a dense propagator used as the
//! verification oracle.

pub mod classifier;
pub mod dilation;
pub mod error;
pub mod examples;
pub mod iq;
pub mod linalg;
pub mod model;
pub mod normalizer;
pub mod optimize;
pub mod platforms;
pub mod propagator;
pub mod sampled;

pub use error::{Result, VzError};
pub use model::{
    CaseTag, CompiledSchedule, CouplingModel, CouplingOperator, DilationRecord, DriveTopology, HardwareModel,
    Layer, PairPulse, PieceDilation, PulseSchedule, Quadrature, VirtualZProgram,
};
pub use sampled::{accumulate_phase, invert_monotone, Phase, SampledFunction, Unit};
