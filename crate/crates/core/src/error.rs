use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes that cannot be combined.
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a precondition (duplicate ids, non-binary labels, ...).
    #[error("data error: {0}")]
    Data(String),

    /// API misuse (backward on a non-scalar, sgd without gradients, bad CLI flag).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Data(_) | Error::Format { .. } | Error::Consistency(_) | Error::Io { .. } => 3,
            Error::Verification(_) => 4,
            Error::Dimension(_) | Error::Internal(_) => 1,
        }
    }
}
