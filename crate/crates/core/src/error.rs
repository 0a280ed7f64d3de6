use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The assembled saddle-point matrix could not be factorized.
    #[error("singular subproblem (1-norm condition estimate {condition:e})")]
    SingularSubproblem { condition: f64 },

    #[error("active-set iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid reference solution: {0}")]
    InvalidReference(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
