//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhnetError {
    /// A tensor or argument had an unexpected shape.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// ROI cropping found no foreground voxels.
    #[error("empty ROI: mask has no foreground voxels")]
    EmptyRoi,

    /// RAC computation found an empty PA mask in every frame.
    #[error("empty PA mask: no frame contains foreground voxels")]
    EmptyPaMask,

    /// An AUC was requested for a class absent from (or filling) the label set.
    #[error("degenerate class {class}: need both positive and negative examples")]
    DegenerateClass { class: usize },

    /// A stratified split was asked for more samples than a class holds.
    #[error("class {class} has {available} samples, cannot draw {requested}")]
    NotEnoughSamples {
        class: usize,
        available: usize,
        requested: usize,
    },

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A holdout repeat failed; carries the repeat index for diagnosis.
    #[error("repeat {repeat}: {source}")]
    Repeat {
        repeat: usize,
        #[source]
        source: Box<PhnetError>,
    },

    /// Malformed tensor / checkpoint / manifest file.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl PhnetError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PhnetError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        PhnetError::Json {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        PhnetError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PhnetError>;
