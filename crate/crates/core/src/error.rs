//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A trace row that could not be turned into a record. Carries enough
    /// context to point at the offending line.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// Caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested statistic is undefined on this input
    /// (zero log-rank variance, zero-RMST ratio denominator, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unreadable trace file {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
