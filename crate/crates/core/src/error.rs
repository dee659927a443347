use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: smallest singular value {singular_value:e} is below {threshold:e}")]
    RankDeficient { singular_value: f64, threshold: f64 },

    #[error("degenerate data: covariance eigenvalue {eigenvalue:e} is below {threshold:e}")]
    SingularCovariance { eigenvalue: f64, threshold: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("label {label} out of range for {r} clusters")]
    LabelOutOfRange { label: usize, r: usize },

    #[error("no usable benchmark: every local estimate failed")]
    NoBenchmark,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("k-means needs at least {r} atoms, pool has {count}")]
    TooFewAtoms { count: usize, r: usize },

    #[error("cluster {0} is empty after k-means")]
    EmptyCluster(usize),

    #[error("corrupt fraction {0} is at or beyond the geometric median breakdown point 0.5")]
    BeyondBreakdown(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
