use thiserror::Error;

use crate::spd::SpdMatrix;

/// Errors produced by the estimation routines.
#[derive(Debug, Error)]
pub enum ScatterError {
    /// Malformed arguments: non-finite entries, mismatched dimensions, bad parameters.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A function was evaluated outside its domain (log of a non-positive value, zero rows under Tyler).
    #[error("domain error: {0}")]
    DomainError(String),

    /// The requested combination is not available (non-smooth penalty for FP, singular target at eta = 0).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The penalized Gaussian subproblem is not coercive at this eta.
    #[error("eta = {eta} outside the admissible range: {reason}")]
    EtaTooSmall { eta: f64, reason: String },

    /// An iterative routine ran out of iterations; the best iterate is attached.
    #[error("no convergence after {iters} iterations: {reason}")]
    NoConvergence {
        iters: usize,
        reason: String,
        best: Option<Box<SpdMatrix>>,
    },

    /// A matrix that must be positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotSpd(String),

    /// Exhaustive enumeration would exceed the subset budget; a randomized verdict is attached.
    #[error("enumeration budget exceeded ({subsets} subsets); heuristic verdict holds = {heuristic_holds}")]
    BudgetExceeded {
        subsets: u128,
        heuristic_holds: bool,
    },

    /// An invariant that holds in exact arithmetic was violated.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, ScatterError>;

impl ScatterError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ScatterError::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ScatterError::DomainError(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        ScatterError::Unsupported(msg.into())
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            ScatterError::InvalidInput(_) => "InvalidInput",
            ScatterError::DomainError(_) => "DomainError",
            ScatterError::Unsupported(_) => "Unsupported",
            ScatterError::EtaTooSmall { .. } => "EtaTooSmall",
            ScatterError::NoConvergence { .. } => "NoConvergence",
            ScatterError::NotSpd(_) => "NotSpd",
            ScatterError::BudgetExceeded { .. } => "BudgetExceeded",
            ScatterError::Internal(_) => "Internal",
        }
    }
}
