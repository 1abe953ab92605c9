//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while loading or preparing corpora.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected `user<TAB>item`, found {found} fields")]
    MalformedFeedbackLine {
        path: String,
        line: usize,
        found: usize,
    },

    #[error("no feedback in {path}")]
    EmptyFeedback { path: String },

    #[error("all users filtered: no user has {min_count} or more positives")]
    AllUsersFiltered { min_count: usize },

    #[error("user {user} has {count} positives; splitting requires at least 3")]
    TooFewPositives { user: String, count: usize },

    #[error("{path}:{line}: coordinate {coord} out of range for item {item} (dimension {dimension})")]
    CoordinateOutOfRange {
        path: String,
        line: usize,
        item: String,
        coord: u32,
        dimension: usize,
    },

    #[error("{path}:{line}: cannot parse feature entry `{token}` for item {item}")]
    BadFeatureEntry {
        path: String,
        line: usize,
        item: String,
        token: String,
    },

    #[error("{path}:{line}: coordinates not strictly increasing for item {item}")]
    UnsortedCoordinates {
        path: String,
        line: usize,
        item: String,
    },

    #[error("{path}:{line}: duplicate feature row for item {item}")]
    DuplicateFeatureRow {
        path: String,
        line: usize,
        item: String,
    },

    #[error("{path}:{line}: dense row for item {item} has {found} values, expected {expected}")]
    BadDenseLength {
        path: String,
        line: usize,
        item: String,
        found: usize,
        expected: usize,
    },
}

/// Errors raised by scoring operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("{kind} index {index} out of range (size {size})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        size: usize,
    },

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Errors raised by the triple sampler.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("corpus has no users with training positives")]
    NoTrainingData,

    #[error("user {user} has positive feedback on every item; cannot sample a negative")]
    DegenerateCorpus { user: usize },
}

/// Errors raised during training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("model has visual dimensions but no feature store was provided")]
    MissingFeatures,

    #[error("non-finite value in {parameter} after update on triple ({user}, {pos_item}, {neg_item})")]
    NonFinite {
        parameter: &'static str,
        user: usize,
        pos_item: usize,
        neg_item: usize,
    },

    #[error("training diverged at epoch {epoch} ({detail})")]
    Diverged { epoch: usize, detail: String },

    #[error(transparent)]
    Sample(#[from] SampleError),

    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors raised by the evaluator.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("user {user} has no test item")]
    NoTestItem { user: usize },
}

/// Errors raised by the synthetic corpus generator.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

/// Errors raised while reading or writing checkpoints.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing or malformed metadata line: {detail}")]
    BadMetadata { path: String, detail: String },

    #[error("{path}: tensor payload truncated (expected {expected} floats, found {found})")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
}
