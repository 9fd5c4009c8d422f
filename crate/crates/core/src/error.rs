use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series of length {len} is too short for lag order {p} (need len > p)")]
    SeriesTooShort { len: usize, p: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time series contains a non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("matrix has no off-diagonal entries")]
    EmptyMatrix,

    #[error("degenerate scale: every pairwise distance is zero")]
    DegenerateScale,

    #[error("residual diagonal {value:e} at index {index} is negative; target is not PSD")]
    NegativeDiagonal { index: usize, value: f64 },

    #[error("all training labels belong to a single class")]
    SingleClassTraining,

    #[error("cross-validation fold {fold} lacks class {class}")]
    FoldTooSmall { fold: usize, class: usize },

    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Strips pair-index context, returning the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            other => other,
        }
    }
}
