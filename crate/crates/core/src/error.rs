use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the descriptor, encoding and pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed image file: {0}")]
    MalformedFile(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("coordinate ({x}, {y}) outside image of size {width}x{height}")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("negative histogram entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("class `{0}` has no entries in a required partition")]
    EmptyClass(String),

    #[error("insufficient images: {0}")]
    InsufficientImages(String),

    #[error("bad model file {}: {reason}", path.display())]
    BadModelFile { path: PathBuf, reason: String },

    #[error("{stage} failed on {item}: {source}")]
    Stage {
        stage: &'static str,
        item: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps `self` with the name of the pipeline stage and the item (image,
    /// split, file) being processed when it failed.
    pub fn in_stage(self, stage: &'static str, item: impl Into<String>) -> Self {
        Error::Stage { stage, item: item.into(), source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
