use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte offset {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("invalid tile: {0}")]
    InvalidTile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("cannot impute reflectance channel {channel}: no observed values in tile")]
    EmptyChannel { channel: usize },

    #[error("tile too fragmented: no admissible superpoint remains at PTS_min = {pts_min}")]
    TooFragmented { pts_min: usize },

    #[error("not enough samples for k-means: {samples} rows for k = {k}")]
    TooFewSamples { samples: usize, k: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: u64, reason: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }
}
