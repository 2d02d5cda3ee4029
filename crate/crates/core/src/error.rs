use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Both the circulant embedding and the dense factorization were rejected.
    #[error(
        "fBm sampling failed: circulant eigenvalue {eigenvalue:e} at index {index}, dense factorization also failed"
    )]
    Sampling { eigenvalue: f64, index: usize },

    /// The coupled flow crossed, which the continuous flow cannot do.
    #[error("coupled paths not ordered at grid index {index}: difference {difference:e}")]
    OrderViolation { index: usize, difference: f64 },

    #[error("shifted increment vanishes at grid index {index}")]
    ZeroIncrement { index: usize },

    #[error("linear solve failed although the stability event holds: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
