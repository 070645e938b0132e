use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum ReconError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("stage mismatch: expected {expected:?}, found {found:?}")]
    StageMismatch {
        expected: crate::raster::DepthStage,
        found: crate::raster::DepthStage,
    },

    #[error("non-finite loss on keyframe pair ({0}, {1})")]
    NonFiniteLoss(usize, usize),

    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ReconError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ReconError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReconError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        ReconError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = ReconError> = std::result::Result<T, E>;
