//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or mask dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A structural precondition on a model, kernel, or attack config failed.
    #[error("configuration error: {0}")]
    Config(String),

    /// Weight file does not start with the `SRAW` magic bytes.
    #[error("bad magic: not a SRAW weight file")]
    BadMagic,

    /// Weight file declares a format version this build does not understand.
    #[error("unsupported weight file version {0}")]
    VersionMismatch(u8),

    /// Declared tensor shapes in a weight file do not match the model config.
    #[error("weight shape mismatch: {0}")]
    WeightShape(String),

    /// Weight file ended before the declared payload was read.
    #[error("truncated weight file")]
    Truncated,

    /// Image file uses a bit depth other than 8 bits per sample.
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    /// No usable images were found or provided.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// The outer region of a mask is empty, so the metric is undefined.
    #[error("empty outer region: mask covers the whole image")]
    EmptyOuterRegion,

    /// A report has nothing to emit.
    #[error("empty report: no per-image entries, matrix, or robustness data")]
    EmptyReport,

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
