use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no posts")]
    Empty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("unknown resource `{0}`")]
    UnknownResource(String),

    #[error("identifier `{0}` already present in corpus")]
    IdCollision(String),

    #[error("training data must contain both classes (legitimate: {legitimate}, bogus: {bogus}, need {required} each)")]
    ClassImbalance {
        legitimate: usize,
        bogus: usize,
        required: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("model kind mismatch: expected {expected}, got {found}")]
    WrongModel {
        expected: &'static str,
        found: &'static str,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("run {run}, classifier {classifier}, attack size {attack_size}: {source}")]
    Experiment {
        run: usize,
        classifier: String,
        attack_size: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
