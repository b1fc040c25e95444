use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text line or binary record. `line` is 1-based (file line for
    /// CSV, record number for the binary format).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A well-formed event that violates the stream contract. `row` is the
    /// 1-based data row (header excluded).
    #[error("invalid event at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 usage, 3 input, 4 resource.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Validation { .. } => 3,
            Error::Resource(_) => 4,
        }
    }
}
