use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty point cloud: {0}")]
    EmptyCloud(&'static str),
    #[error("mesh has zero total surface area")]
    ZeroAreaMesh,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("requested {requested} points but the cloud only has {available}")]
    NotEnoughPoints { requested: usize, available: usize },
    #[error("too few correspondences: {0} (need at least 3)")]
    TooFewCorrespondences(usize),
    #[error("degenerate correspondence configuration (cross-covariance rank < 2)")]
    DegenerateConfiguration,
    #[error("no correspondences survived selection")]
    NoCorrespondences,
    #[error("batch of size {0} cannot be normalized with current statistics")]
    BatchTooSmall(usize),
    #[error("training diverged at epoch {epoch}; last finite loss {last_finite_loss}")]
    Diverged { epoch: usize, last_finite_loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("png: {0}")]
    Png(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
