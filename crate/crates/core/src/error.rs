use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("no candidate anchors for ground truth")]
    NoCandidates,

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown categories: {}", .0.join(", "))]
    UnknownCategory(Vec<String>),

    #[error("self-check failed: {}", .0.join("; "))]
    SelfCheck(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/config, 3 data, 4 self-check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::SelfCheck(_) => 4,
            _ => 3,
        }
    }
}
