use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid example {id:?}: {message}")]
    InvalidExample { id: String, message: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("missing predictions for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),

    #[error("reports do not share the same group set: {0}")]
    GroupMismatch(String),

    #[error("empty training set")]
    EmptyDataset,

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("dataset has {size} examples, fewer than k = {k}")]
    TooFewExamples { size: usize, k: usize },

    #[error("split {split}: every candidate has an undefined validation correlation")]
    NoValidCandidate { split: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
