use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("orphan file without counterpart: {}", .0.display())]
    OrphanFile(PathBuf),

    #[error("pair `{name}` has mismatched dimensions: clean {clean:?} vs noisy {noisy:?}")]
    PairDimensions {
        name: String,
        clean: (usize, usize, usize),
        noisy: (usize, usize, usize),
    },

    #[error("need {required} generated pairs, only {available} available")]
    InsufficientGenerated { required: usize, available: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("module `{0}` is frozen and rejects parameter updates")]
    Frozen(String),

    #[error("missing checkpoint: {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("non-finite {loss} loss at step {step}")]
    NonFinite { step: u64, loss: &'static str },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
