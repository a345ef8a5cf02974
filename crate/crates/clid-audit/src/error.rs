//! Crate-wide error type.
//!
//! Errors are split into two coarse categories that map onto process exit
//! codes: validation failures (bad arguments, bad config, corrupted
//! artifacts) exit with 1, runtime failures (numerical divergence, I/O,
//! internal accounting) exit with 2.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    #[error("artifact integrity: {0}")]
    Integrity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("query accounting mismatch: expected {expected}, observed {observed}")]
    QueryAccounting { expected: u64, observed: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Exit code for the CLI: 1 for validation errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::Config(_)
            | Error::DegenerateFeature(_)
            | Error::Integrity(_) => 1,
            Error::Numerical(_)
            | Error::QueryAccounting { .. }
            | Error::Io(_)
            | Error::Serialization(_) => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
