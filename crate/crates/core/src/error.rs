use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("a random stream is required for stochastic forward passes")]
    MissingRng,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid loss descriptor: {0}")]
    LossDescriptor(String),
    #[error("loss term is not differentiable: {0}")]
    NotDifferentiable(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least two classes are required, found {0}")]
    SingleClass(usize),
    #[error("class {0} is not known to the model")]
    UnknownClass(usize),
    #[error("need more than k={k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("no eligible counterfactual candidates: {0}")]
    NoCandidates(String),
    #[error("undefined statistic: {0}")]
    Undefined(String),
    #[error("reconstruction error {mse} above ceiling {ceiling}")]
    ReconstructionCeiling { mse: f64, ceiling: f64 },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated file ({detail})")]
    Truncated { path: PathBuf, detail: String },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
