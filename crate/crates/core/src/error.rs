//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by readers, writers, and numeric operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// An in-memory object violates an invariant of its type.
    #[error("invalid {what}: {message}")]
    Invalid { what: String, message: String },

    /// Inputs that are individually valid do not fit together.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// A numeric operation has no defined result for these inputs.
    #[error("{0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn invalid(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
