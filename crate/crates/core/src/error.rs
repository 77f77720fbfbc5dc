use thiserror::Error;

pub type Result<T> = std::result::Result<T, VzError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VzError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("domain mismatch: {0}")]
    Domain(String),
    #[error("t = {t} is outside the sampled domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("function is not strictly monotone: {0}")]
    NonMonotone(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("phase not defined far enough to invert: need tau in [{need_lo:.6e}, {need_hi:.6e}], have [{have_lo:.6e}, {have_hi:.6e}]")]
    DomainExhausted {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("qubit {qubit} appears in more than one pair of layer {layer}")]
    InconsistentLayer { layer: usize, qubit: usize },
    #[error("degenerate frequencies: {0}")]
    DegenerateFrequencies(String),
    #[error("quadratic for the coupling constraint has no real root at tau = {0:.6e}")]
    QuadraticNoRealRoot(f64),
    #[error("fixed-point recursion stalled: {0}")]
    FixedPointStall(String),
    #[error("dilation crosses the identity at tau = {0:.6e}")]
    SignViolation(f64),
    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),
    #[error("phase is not strictly increasing")]
    NonMonotonePhase,
    #[error("propagation step too coarse: Richardson estimate {estimate:.3e} > tolerance {tol:.3e}")]
    StepTooCoarse { estimate: f64, tol: f64 },
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("not enough points for a fit")]
    NotEnoughPoints,
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
}

impl VzError {
    /// Stable short name, used by the CLI for exit diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            VzError::Validation(_) => "Validation",
            VzError::Domain(_) => "DomainMismatch",
            VzError::OutOfDomain { .. } => "OutOfDomain",
            VzError::NonMonotone(_) => "NonMonotone",
            VzError::NoSolution(_) => "NoSolution",
            VzError::DomainExhausted { .. } => "DomainExhausted",
            VzError::NonHermitian(_) => "NonHermitian",
            VzError::InconsistentLayer { .. } => "InconsistentLayer",
            VzError::DegenerateFrequencies(_) => "DegenerateFrequencies",
            VzError::QuadraticNoRealRoot(_) => "QuadraticNoRealRoot",
            VzError::FixedPointStall(_) => "FixedPointStall",
            VzError::SignViolation(_) => "SignViolation",
            VzError::OptimizerDiverged(_) => "OptimizerDiverged",
            VzError::NonMonotonePhase => "NonMonotonePhase",
            VzError::StepTooCoarse { .. } => "StepTooCoarse",
            VzError::UnsupportedCombination(_) => "UnsupportedCombination",
            VzError::DimensionMismatch(..) => "DimensionMismatch",
            VzError::NotEnoughPoints => "NotEnoughPoints",
            VzError::NotUnitary(_) => "NotUnitary",
        }
    }

    /// Input problems (exit 1) as opposed to solver failures (exit 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            VzError::Validation(_)
                | VzError::Domain(_)
                | VzError::OutOfDomain { .. }
                | VzError::NonHermitian(_)
                | VzError::InconsistentLayer { .. }
                | VzError::DimensionMismatch(..)
                | VzError::NotUnitary(_)
                | VzError::UnsupportedCombination(_)
        )
    }
}
