//! Crate-wide error type.

use crate::colorspace::ColorSpace;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received an image in the wrong color space.
    #[error("color space contract violation: expected {expected}, got {actual}")]
    SpaceMismatch {
        expected: ColorSpace,
        actual: ColorSpace,
    },

    /// Array/image dimensions do not satisfy an operation's contract.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// A precondition stated by an operation's contract was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// A numerical routine failed (e.g. an eigenvalue fell outside tolerance).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A weights file is missing, corrupt, or fails its checksum.
    #[error("weights file error ({path}): {reason}")]
    Weights { path: String, reason: String },

    /// A weights file holds a different architecture than the caller expects.
    #[error("model spec mismatch: expected {expected}, found {found}")]
    SpecMismatch { expected: String, found: String },

    /// Dataset manifest is malformed (duplicate ids, bad records, ...).
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Inference or a training step failed on a specific sample.
    #[error("failure on sample '{id}': {reason}")]
    Sample { id: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
