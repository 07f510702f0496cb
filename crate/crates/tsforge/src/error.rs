//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// Errors produced by corpus handling, model execution and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed textual input with a row/field location where known.
    #[error("parse error in {path} (row {row}, field {field}): {msg}")]
    Parse {
        path: String,
        row: usize,
        field: usize,
        msg: String,
    },

    /// A corpus invariant does not hold (shapes, labels, padding).
    #[error("corpus integrity violation: {0}")]
    Integrity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation precondition was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine failed (non-finite values, non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The fitted difference curve admits fewer than four intervals.
    /// Callers may fall back to `IntervalSegmentation::equal_quarters`.
    #[error("degenerate segmentation: {0}")]
    DegenerateSegmentation(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config/input, 3 numerical,
    /// 4 degenerate segmentation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            Error::DegenerateSegmentation(_) => 4,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
