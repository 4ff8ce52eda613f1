//! Errors raised by the bench driver.

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] autows::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot serve on {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("axis/method mismatch: {0}")]
    AxisMismatch(String),
    #[error("sweep point {point} (label_budget = {budget}): budget exceeds available labels ({budget} > {available})")]
    BudgetExceeded {
        point: usize,
        budget: usize,
        available: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
