use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty training data")]
    EmptyTrainingData,

    #[error("vector dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("unknown classification method `{0}`")]
    UnknownMethod(String),

    #[error("cannot plan {k} folds over {n} records")]
    TooFewRecords { n: usize, k: usize },

    #[error("at least {required} points required, got {found}")]
    TooFewPoints { required: usize, found: usize },

    #[error("at least one API key is required")]
    NoKeys,

    #[error("model format: {0}")]
    Model(String),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
