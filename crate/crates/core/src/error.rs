use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: not a DESC1 file")]
    BadMagic { path: PathBuf },

    #[error("{path}: corrupt descriptor file ({reason})")]
    Corrupt { path: PathBuf, reason: String },

    #[error("{path}: invalid descriptor value at index {index}")]
    InvalidValue { path: PathBuf, index: usize },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("split leakage: video `{id}` is in both train and test of split `{split}`")]
    SplitLeakage { split: String, id: String },

    #[error("unknown video `{id}` referenced by split `{split}`")]
    UnknownVideo { split: String, id: String },

    #[error("missing source {path} (video `{id}`, layer `{layer}`)")]
    MissingSource {
        id: String,
        layer: String,
        path: PathBuf,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty video: {0}")]
    EmptyVideo(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid model container {path}: {reason}")]
    Container { path: PathBuf, reason: String },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
