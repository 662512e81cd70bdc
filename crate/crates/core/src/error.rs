use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("node index {index} out of range for {n} nodes in {op}")]
    Index {
        op: &'static str,
        index: usize,
        n: usize,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("video has no frames")]
    EmptyVideo,

    #[error("data error in video `{video}`, field `{field}`: {message}")]
    Data {
        video: String,
        field: String,
        message: String,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("non-finite loss at epoch {epoch}, video `{video}`")]
    NonFiniteLoss { epoch: usize, video: String },

    #[error("checksum mismatch for array `{array}` of video `{video}`")]
    Checksum { video: String, array: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(video: &str, field: &str, message: impl Into<String>) -> Self {
        Error::Data {
            video: video.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
