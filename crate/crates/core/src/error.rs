use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum NilmError {
    #[error("series is empty")]
    EmptySeries,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("negative value at index {0}")]
    NegativeValue(usize),
    #[error("series step must be positive, got {0}")]
    InvalidStep(i64),
    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid detector configuration: {0}")]
    InvalidDetector(String),

    #[error("series domains differ: expected {expected} samples, got {got}")]
    DomainMismatch { expected: usize, got: usize },
    #[error("expected a {expected} series, got {got}")]
    KindMismatch { expected: &'static str, got: &'static str },
    #[error("only one class present; under-sampling needs at least two")]
    SingleClass,
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient data: need {needed} days, dataset covers {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("k must be greater than 1, got {0}")]
    KTooSmall(usize),
    #[error("k = {k} exceeds the training set size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("training set is empty")]
    EmptyTrain,
    #[error("minkowski exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite network input at step {0}")]
    NonFiniteInput(usize),
    #[error("forward cache does not match the model or gradient shape")]
    CacheMismatch,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid appliance spec '{id}': {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error("unknown appliance '{0}'")]
    UnknownAppliance(String),

    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("timestamps are not monotone at line {0}")]
    NonMonotoneTime(usize),
    #[error("gap of {gap}s at line {line} exceeds one step of {step}s")]
    GapTooLarge { line: usize, gap: i64, step: i64 },
    #[error("format version mismatch in {path}: expected {expected}, found {found}")]
    VersionMismatch { path: PathBuf, expected: String, found: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl NilmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NilmError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = NilmError> = std::result::Result<T, E>;
