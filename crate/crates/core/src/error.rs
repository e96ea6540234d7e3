use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures while reading or validating a dataset directory.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: header mismatch: {detail}")]
    HeaderMismatch { file: PathBuf, detail: String },
    #[error("{file}:{row}: label {label} out of range [0, {classes})")]
    LabelOutOfRange {
        file: PathBuf,
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("{file}: overlapping splits: {detail}")]
    OverlappingSplit { file: PathBuf, detail: String },
    #[error("{file}:{row}: parse error: {detail}")]
    Parse {
        file: PathBuf,
        row: usize,
        detail: String,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    Numeric(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("tensor is not recorded on this tape")]
    Provenance,
    #[error("batch mismatch: {0}")]
    Batch(String),
    #[error("invalid episode split: {0}")]
    Split(String),
    #[error("empty candidate class set")]
    EmptyClassSet,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric(_) | Error::GradCheck(_) | Error::Contract(_) | Error::Provenance => 3,
            Error::Dimension { .. }
            | Error::Batch(_)
            | Error::Split(_)
            | Error::EmptyClassSet
            | Error::Checkpoint(_)
            | Error::Data(_)
            | Error::Io { .. } => 2,
        }
    }

    /// Short machine-readable kind written to the diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Numeric(_) => "numeric",
            Error::GradCheck(_) => "gradcheck",
            Error::Contract(_) => "contract",
            Error::Provenance => "provenance",
            Error::Batch(_) => "batch",
            Error::Split(_) => "split",
            Error::EmptyClassSet => "empty-class-set",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
        }
    }
}
