//! A small 1D convolutional regressor over `[rois x window]` BOLD blocks.
//!
//! Everything is double precision. Convolutions are valid (no padding)
//! cross-correlations evaluated as im2col + GEMM; backward passes are exact.
//! The `[window x rois]` dataset layout is transposed on the way in so that
//! ROIs are channels and convolution runs along time.

mod io;
mod layers;
mod loss;
mod network;
mod optim;
mod predict;
mod tensor;
mod train;

pub use io::{load_weights, read_weights, save_weights, write_weights, FORMAT_VERSION, MAGIC};
pub use layers::{relu_backward, relu_forward, Conv1dLayer, ConvGrads, DenseGrads, DenseLayer};
pub use loss::mse_loss;
pub use network::{
    batch_input, init_parameters, Activation, ConvSpec, Layer, ModelConfig, Network,
};
pub use optim::{adam_step, AdamParams};
pub use predict::{predict_dataset, predict_series, predict_series_with, Reconstruction};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, TrainHyper, TrainState};

use thiserror::Error;

use crate::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("loss diverged at epoch {0}")]
    DivergedLoss(usize),
    #[error("not a weight file")]
    BadMagic,
    #[error("weight file version {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("weight file checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
