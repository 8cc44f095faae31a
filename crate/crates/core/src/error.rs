use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lo = {lo} exceeds hi = {hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("{0} is undefined for this input")]
    Undefined(&'static str),

    #[error("invariant breach at iteration {iteration}: {what}")]
    InvariantBreach { iteration: usize, what: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit code for the command line runner: 2 for configuration
    /// and usage problems, 3 for numeric invariant breaches, 4 for I/O and
    /// file format failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => 4,
            Error::InvariantBreach { .. } | Error::ConstraintViolation(_) | Error::Undefined(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
