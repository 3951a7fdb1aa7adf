use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e} exceeds tolerance {tolerance:e})")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("matrix is indefinite (eigenvalue {eigenvalue:e} below -{tolerance:e})")]
    IndefiniteMatrix { eigenvalue: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite entry in {0}")]
    NonFiniteInput(&'static str),

    #[error("gradient contains non-finite entries (parameter slot {slot})")]
    NonFiniteGradient { slot: usize },

    #[error("loss became non-finite at iteration {iteration} (value {value})")]
    NonFiniteLoss { iteration: usize, value: f64 },

    #[error("angular spread must be positive, got {0}")]
    DegenerateSpread(f64),

    #[error("inconsistent grouping: {0}")]
    InconsistentGrouping(String),

    #[error("channel column {column} is zero; cannot derive a beam direction")]
    RankDeficientChannel { column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
