use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error("invalid knot grid: {0}")]
    InvalidGrid(String),

    #[error("basis derivative undefined for degree-0 splines")]
    DerivativeUndefined,

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("feature {feature} has zero variance over the training range")]
    ZeroVariance { feature: usize },

    #[error("series of length {len} too short for window {input_len}+{horizon}")]
    SeriesTooShort {
        len: usize,
        input_len: usize,
        horizon: usize,
    },

    #[error("split {rule} needs {needed} rows but series has {available}")]
    SplitOverflow {
        rule: String,
        needed: usize,
        available: usize,
    },

    #[error("{path}: missing value at row {row}, column {column}")]
    MissingValue {
        path: PathBuf,
        row: usize,
        column: usize,
    },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

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

    /// Process exit code: 1 numeric failure, 2 configuration error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape { .. }
            | Error::Rank { .. }
            | Error::InvalidTensor(_)
            | Error::NonFinite { .. }
            | Error::Divergence { .. }
            | Error::DerivativeUndefined => 1,
            Error::InvalidGrid(_)
            | Error::MissingKey(_)
            | Error::InvalidValue { .. }
            | Error::Config(_)
            | Error::ZeroVariance { .. }
            | Error::SeriesTooShort { .. }
            | Error::SplitOverflow { .. } => 2,
            Error::MissingValue { .. }
            | Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Io { .. }
            | Error::Json(_) => 3,
        }
    }
}
