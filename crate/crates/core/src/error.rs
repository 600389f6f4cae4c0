use std::path::PathBuf;

use phasegen_nn::checkpoint::CheckpointError;

/// Failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Validation,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Structural(_) | Error::Validation(_) | Error::Config(_) | Error::Parse { .. } => {
                Category::Validation
            }
            _ => Category::Runtime,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
