use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Spawn or goal placement failed within the attempt budget.
    #[error("generation failed: {0}")]
    GenerationFailed(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss or gradient became non-finite during an update.
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("frame of {0} bytes exceeds the 16 MiB limit")]
    FrameTooLarge(usize),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
