use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid gold tree in sentence {sentence}: {reason}")]
    InvalidTree { sentence: String, reason: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite gradient while training on task `{task}`")]
    NonFiniteGradient { task: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than by the environment.
    /// The CLI maps these to exit code 2 and everything else to 1.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Checkpoint(_))
    }
}
