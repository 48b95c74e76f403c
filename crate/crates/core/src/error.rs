use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI and the C ABI to pick exit/status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image at byte {offset}: {reason}")]
    ImageFormat { offset: usize, reason: String },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch at layer {layer}: expected {expected}, got {actual}")]
    LayerShape {
        layer: usize,
        expected: String,
        actual: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("weights file truncated: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("bad model file: {0}")]
    ModelFormat(String),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("saturation condition violated: discriminant {discriminant} < 0 for x = {x} mm")]
    SaturationViolated { x: f64, discriminant: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config: {0}")]
    Config(String),

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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::NonFiniteLoss { .. } | Error::SaturationViolated { .. } | Error::Numeric(_) => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Data,
        }
    }
}
