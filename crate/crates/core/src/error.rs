use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("horizon too small for schedule: epoch length {epoch_len} >= horizon {horizon}")]
    HorizonTooSmall { epoch_len: usize, horizon: usize },

    #[error("epoch {epoch} finalized after {processed} of {epoch_len} rounds")]
    MidEpochFinalize {
        epoch: usize,
        processed: usize,
        epoch_len: usize,
    },

    #[error("arm {0} has zero probability under the played distribution")]
    ZeroProbability(usize),

    #[error("grid search supports at most {max} arms, got {got}")]
    UnsupportedDimension { max: usize, got: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trace replay diverged: {0}")]
    ReplayMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
