use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{row}: non-finite value")]
    NonFinite { path: PathBuf, row: usize },
    #[error("{path}:{row}: label out of range ({label} >= {classes})")]
    LabelOutOfRange {
        path: PathBuf,
        row: usize,
        label: i64,
        classes: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("side must be a power of two (got {0})")]
    NotPowerOfTwo(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("empty validation labels")]
    EmptyValidation,
    #[error("no candidate trainable")]
    NoTrainableCandidate,
    #[error("non-finite loss during training")]
    NonFiniteLoss,
    #[error("non-finite log-likelihood")]
    NonFiniteLikelihood,
    #[error("pool too small: {size} candidates (minimum {min})")]
    PoolTooSmall { size: usize, min: usize },
    #[error("logit width mismatch: {width} columns for {classes} classes")]
    LogitWidth { width: usize, classes: usize },
    #[error("unknown candidate: {0}")]
    UnknownCandidate(String),
    #[error("already decided: {0}")]
    AlreadyDecided(String),
    #[error("session already finalized")]
    SessionFinalized,
    #[error("wrong session mode: {0}")]
    WrongMode(&'static str),
    #[error("unknown metric: {0}")]
    UnknownMetric(String),
    #[error("problem {0} has no applicable method")]
    NoApplicableMethod(String),
    #[error("no labeled points")]
    NoLabeledPoints,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
