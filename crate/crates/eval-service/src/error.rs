use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("campaign `{0}` not found")]
    NotFound(String),
    #[error("{0}")]
    Validation(String),
    #[error("system `{system}` has no text for instances {missing:?}")]
    Coverage { system: String, missing: Vec<usize> },
    #[error("missing or unknown bearer token")]
    Unauthorized,
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    Conflict(String),
    /// Worth retrying: nothing was acknowledged.
    #[error("storage failure at {}: {source}", path.display())]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] itref_core::Error),
}

impl EvalError {
    pub(crate) fn storage(path: &Path, source: std::io::Error) -> Self {
        EvalError::Storage {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
