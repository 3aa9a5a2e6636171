use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integer overflow while computing {0}")]
    Overflow(String),

    #[error("epsilon {eps} is not below the admissible threshold eps0 = {eps0}")]
    EpsilonTooLarge { eps: f64, eps0: f64 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit code for the CLI contract: parameter errors exit with 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
