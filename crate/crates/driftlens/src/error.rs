//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by ingestion, model fitting, and the explanation pipeline.
#[derive(Debug, Error)]
pub enum DriftError {
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize },
    #[error("dataset contains no rows")]
    EmptyDataset,
    #[error("all timestamps are equal; time cannot be normalized")]
    ConstantTime,
    #[error("split at {change_point} leaves one side empty")]
    DegenerateSplit { change_point: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("labels contain a single class only")]
    SingleClass,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation not supported for this model kind: {0}")]
    WrongModelKind(&'static str),
    #[error("embedding must be polynomial or fourier for segmentation")]
    InvalidEmbedding,
    #[error("{0} outside its valid domain")]
    DomainError(&'static str),
    #[error("group has no samples")]
    EmptyGroup,
    #[error("k={k} exceeds group size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("neighborhood graph is disconnected after augmentation")]
    DisconnectedGraph,
    #[error("no samples in the opposite region to serve as counterfactuals")]
    NoTargetSamples,
    #[error("sample {0} is not in a drifting region")]
    OriginalNotDrifting(usize),
    #[error("unknown kind: {0}")]
    UnknownKind(String),
    #[error("asked to perturb {requested} features but only {available} exist")]
    TooManyFeatures { requested: usize, available: usize },
    #[error("node dependency graph contains a cycle")]
    CyclicGraph,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("feature truth labels contain a single class only")]
    SingleClassTruth,
    #[error(
        "segmentation was built on a different dataset (expected {expected} samples, got {got})"
    )]
    MismatchedDataset { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DriftError>;
