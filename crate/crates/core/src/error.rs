use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on axis {axis}: expected {expected}, found {found}")]
    DimensionMismatch {
        axis: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid metadata `{field}`: {reason}")]
    InvalidMetadata { field: &'static str, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("FIR filter needs at least one coefficient")]
    EmptyCoefficients,

    #[error("axis of length {len} is too short (need at least {min})")]
    AxisTooShort { len: usize, min: usize },

    #[error("input has no strictly positive element")]
    AllZeroInput,

    #[error("dynamic range must be positive, got {0} dB")]
    NonPositiveRange(f64),

    #[error("window {window:?} does not fit image {image:?}")]
    WindowTooLarge {
        window: (usize, usize),
        image: (usize, usize),
    },

    #[error("model layer {layer}: dimension mismatch ({reason})")]
    ModelDimension { layer: usize, reason: String },

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("cycle detected through nodes [{}]", .0.join(", "))]
    CycleDetected(Vec<String>),

    #[error("port mismatch on edge {edge}: expected {expected}, found {found}")]
    PortMismatch {
        edge: String,
        expected: String,
        found: String,
    },

    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),

    #[error("node `{node}` failed: {source}")]
    Node {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("need {needed} frames but the environment yielded only {available}")]
    InsufficientFrames { needed: usize, available: usize },

    #[error("expected a {expected} image, got {found}")]
    WrongStage {
        expected: &'static str,
        found: &'static str,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn metadata(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidMetadata {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
