use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Cholesky broke down even at the largest allowed jitter.
    #[error("matrix is not positive definite: pivot {pivot} failed at jitter {jitter:e}")]
    Singular { pivot: usize, jitter: f64 },

    #[error("eigensolver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    /// Random splits have no rule for points outside the training set.
    #[error("partition of kind `{kind}` cannot assign out-of-sample points")]
    UnsupportedAssignment { kind: &'static str },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for failures of the numerical routines rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::NoConvergence { .. })
    }
}
