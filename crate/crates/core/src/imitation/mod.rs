//! Behavioral cloning with action chunking.

mod dataset;
mod gradcheck;
mod mlp;
mod model;
mod train;

pub use dataset::{
    build_dataset, ChunkDataset, Normalizer, SourceTrial, TargetScale, CHUNK_SIZE, DATASET_FORMAT, FEATURE_DIM,
};
pub use gradcheck::{gradient_check, GRADIENT_CHECK_PARAMS};
pub use mlp::{Activation, ForwardCache, Mlp};
pub use model::{ActionChunk, ChunkModel, MODEL_FORMAT};
pub use train::{masked_mse, masked_mse_grad, train, Sample, TrainReport, TrainingConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImitationError {
    #[error("no usable trials to build a dataset from")]
    EmptyDataset,
    #[error("observation has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("finite-difference epsilon {0} outside [1e-6, 1e-4]")]
    InvalidEpsilon(f64),
    #[error("malformed model artifact: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
