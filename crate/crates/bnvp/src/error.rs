//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value at index {index} is {value}, expected exactly +1 or -1")]
    NotSign { index: usize, value: f32 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("batchnorm scale is degenerate: {0}")]
    DegenerateScale(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("unsupported bit width {0}")]
    UnsupportedBits(u8),

    #[error("feature vector has zero norm; descriptor is undefined")]
    DegenerateDescriptor,

    #[error("reference database is empty")]
    EmptyDatabase,

    #[error("query {0} has no ground-truth entry")]
    MissingGroundTruth(i64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has {got} classes but config declares {expected}")]
    ClassCountMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("match report is empty")]
    EmptyReport,

    #[error("score is zero; efficiency is undefined")]
    ZeroScore,

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("model checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("unsupported model format version {got} (supported: {supported})")]
    UnsupportedVersion { got: u16, supported: u16 },

    #[error("cannot decode image {path}: {reason}")]
    ImageDecode { path: PathBuf, reason: String },

    #[error("malformed ground truth at line {line}: {reason}")]
    MalformedGroundTruth { line: usize, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("model has no batchnorm statistics for layer `{0}`")]
    MissingBnStats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
