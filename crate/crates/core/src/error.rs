use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("matrix is numerically rank deficient (pivot {pivot:e} below threshold {threshold:e})")]
    RankDeficient { pivot: f64, threshold: f64 },

    #[error("row {row} is numerically dependent on the preceding rows")]
    DependentRows { row: usize },

    #[error("invalid group partition: {0}")]
    InvalidPartition(String),

    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            other => Error::Parse(format!("{other:?}")),
        }
    }
}
