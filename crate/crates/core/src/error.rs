use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line count mismatch: {left} has {left_lines} lines, {right} has {right_lines}")]
    Alignment {
        left: PathBuf,
        left_lines: usize,
        right: PathBuf,
        right_lines: usize,
    },

    #[error("{0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("template for {kind} is missing variable `{variable}`")]
    MissingVariable { kind: String, variable: String },

    #[error("invalid template for {kind}: {message}")]
    Template { kind: String, message: String },

    #[error("value for `{variable}` contains a `${{` placeholder sequence")]
    Injection { variable: String },

    #[error("transport error after {attempts} attempt(s) (last status {status:?}): {message}")]
    Transport {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("backend returned an empty completion")]
    EmptyResponse,

    #[error("tokenizer `{name}` failed (exit status {status:?}): {message}")]
    Tokenizer {
        name: String,
        status: Option<i32>,
        message: String,
    },

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("comparability error: {0}")]
    Comparability(String),

    #[error("instance {id}: {source}")]
    Instance {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn for_instance(self, id: usize) -> Self {
        match self {
            Error::Instance { .. } => self,
            other => Error::Instance {
                id,
                source: Box::new(other),
            },
        }
    }

    /// Failures that belong to a single backend call rather than to the run:
    /// the pipeline isolates these per segment instead of aborting.
    pub fn is_call_failure(&self) -> bool {
        match self {
            Error::Transport { .. } | Error::Protocol(_) | Error::EmptyResponse => true,
            Error::Instance { source, .. } => source.is_call_failure(),
            _ => false,
        }
    }
}
