use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: format error at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("inconsistent dataset: {0}")]
    Consistency(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Armijo backtracking ran out of candidates.
    #[error("line search stalled after {backtracks} backtracks (alpha = {alpha:e})")]
    StalledStep { backtracks: usize, alpha: f64 },

    #[error("not a descent direction: D = {0:e}")]
    NotDescent(f64),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("reduction failed (rank {rank}): {reason}")]
    ReductionFailed { rank: usize, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Coarse grouping used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
    Communication,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_) => ErrorKind::Usage,
            Error::Parse { .. }
            | Error::Format { .. }
            | Error::Consistency(_)
            | Error::Degenerate(_)
            | Error::Io { .. }
            | Error::UndefinedMetric(_) => ErrorKind::Data,
            Error::StalledStep { .. } | Error::NotDescent(_) | Error::NoConvergence(_) => {
                ErrorKind::Numerical
            }
            Error::ReductionFailed { .. } | Error::Protocol(_) => ErrorKind::Communication,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
