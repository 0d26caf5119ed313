use thiserror::Error;

/// Errors raised by basis construction, estimation and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FasmError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("point {point} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { point: f64, lo: f64, hi: f64 },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("system matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("loading matrix violates A'A/p = I (max deviation {0:.3e})")]
    LoadingConstraint(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every alpha on the grid gives df >= p; the smoother is over-parameterised")]
    NoFiniteScore,

    #[error("population covariance is not available for the {0} scenario")]
    TruthUnavailable(&'static str),

    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, FasmError>;
