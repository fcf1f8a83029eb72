use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty subset")]
    EmptySubset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("constraint infeasible for all center tuples")]
    AllTuplesInfeasible,

    #[error("tree node budget exhausted before level 1")]
    TreeBudget,

    #[error("faithful preset is not runnable: sample size s = {s:.3e} implies 2^s subsets")]
    FaithfulInfeasible { s: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
