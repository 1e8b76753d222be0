use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed label image; `offset` is the byte position where decoding failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("dimension mismatch: ground truth is {gt_height}x{gt_width}, prediction is {pred_height}x{pred_width}")]
    DimensionMismatch {
        gt_height: usize,
        gt_width: usize,
        pred_height: usize,
        pred_width: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("unpaired files: {}", .0.join(", "))]
    UnmatchedFiles(Vec<String>),

    #[error("ghost placement failed: {0}")]
    Placement(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
