use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    /// `row` is 1-based and counts the header as row 1, matching what an editor shows.
    #[error("unparseable cell at row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing value at row {row}, column '{column}'")]
    MissingValue { row: usize, column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty protected group: protected attribute has no {0} rows")]
    EmptyProtectedGroup(&'static str),

    #[error("label {value} at row {row} is outside {{0,1}} for a classification task")]
    InvalidLabel { row: usize, value: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design matrix is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("optimization diverged at step {step}: objective is not finite")]
    Diverged { step: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("adversarial penalty requires an adversary state")]
    MissingAdversary,

    #[error("penalty '{0}' needs true labels, but the adjustment data is unlabeled")]
    LabelsRequired(&'static str),

    #[error("unknown dataset '{0}' (not in manifest)")]
    UnknownDataset(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("at least {needed} values required, got {got}")]
    TooFewValues { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}
