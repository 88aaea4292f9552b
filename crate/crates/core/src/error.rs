use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embedding: {0}")]
    Embedding(String),

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("example {id}: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_example(self, id: &str) -> Self {
        Error::Example {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self.root(), Error::Divergence(_))
    }

    /// Strips any per-example wrapping.
    pub fn root(&self) -> &Error {
        match self {
            Error::Example { source, .. } => source.root(),
            other => other,
        }
    }
}
