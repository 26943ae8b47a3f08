use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or mismatched shapes between configured components.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller misuse, e.g. a backward pass without its forward cache.
    #[error("usage error: {0}")]
    Usage(String),

    /// Bad input data (camera poses, scene parameters, ...).
    #[error("input error: {0}")]
    Input(String),

    #[error("render error on ray {ray}: {reason}")]
    Render { ray: usize, reason: String },

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("image error for {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("i/o error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
