use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("value at agent {agent}, item {item} is negative or not finite")]
    InvalidValue { agent: usize, item: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("order is not a permutation of the {n} agents")]
    InvalidPermutation { n: usize },

    /// An internal consistency check failed; signals a bug rather than bad input.
    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error("trial {trial}: mechanism welfare {sw} exceeds optimum {opt}")]
    DominanceViolation { trial: u64, sw: f64, opt: f64 },
}

impl Error {
    /// True for failures that indicate a broken invariant (as opposed to bad input).
    pub fn is_assertion(&self) -> bool {
        matches!(self, Error::Assertion(_) | Error::DominanceViolation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
