//! Crate-wide error type.

use thiserror::Error;

/// Errors shared across the estimator, bound, and simulation modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural invariant (non-finite coordinate,
    /// label outside {0,1}, inconsistent dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The (n, p, k) combination leaves fewer than k training neighbors.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// Not enough candidate neighbors in the requested training subset.
    #[error("subset of size {subset_len} cannot supply k = {k} neighbors")]
    InsufficientNeighbors { subset_len: usize, k: usize },

    /// Exhaustive enumeration was requested beyond the configured cap.
    #[error("enumeration of {required} cases exceeds cap {cap}")]
    EnumerationCapExceeded { required: u128, cap: u128 },

    /// A formula was evaluated outside the regime its statement covers.
    #[error("out of regime: {0}")]
    OutOfRegime(String),

    /// A dimension-dependent constant has no built-in default.
    #[error("missing constant: {0}")]
    MissingConstant(String),

    /// Mismatched argument lengths or an otherwise malformed request.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
