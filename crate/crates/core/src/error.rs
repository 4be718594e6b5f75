use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors shared by all simulator modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("matrix is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("unsupported hypothesis pair: {0}")]
    UnsupportedHypothesis(String),

    #[error("adaptive policy is missing a branch for history {history:?} at step {step}")]
    MissingBranch { step: usize, history: Vec<usize> },

    #[error("search space too large: {0}")]
    SearchSpaceTooLarge(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}
