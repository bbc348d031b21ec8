use thiserror::Error;

/// Errors raised across the optimizer, surrogate and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter domain: {0}")]
    ParameterDomain(String),

    #[error("ill-conditioned data: Cholesky failed after {attempts} jitter escalations")]
    IllConditioned { attempts: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("degenerate predictive density at test point {index}")]
    DegenerateDensity { index: usize },

    #[error("surrogate unavailable: every GPi trial failed ({0})")]
    SurrogateUnavailable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-defined ratio: reference curve is not strictly positive at iteration {iteration}")]
    IllDefinedRatio { iteration: usize },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("direction-number table: {0}")]
    DirectionTable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
