//! ROI matrices, windowed training examples, normalisation and fold plans.

mod folds;
mod norm;
mod roi;
mod windows;

pub use folds::{make_folds, FoldPlan};
pub use norm::{normalize, NormStats, ScanNorm};
pub use roi::{RoiTimeseries, DEFAULT_N_ROIS};
pub use windows::{build_windows, window_starts, AlignmentMode, Example, WindowedDataset};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-finite value on line {line}, column {col}")]
    NonFiniteValue { line: usize, col: usize },
    #[error("missing required header `{0}`")]
    MissingMetadata(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("window of {window} volumes does not fit a scan of {n_volumes}")]
    WindowTooLarge { window: usize, n_volumes: usize },
    #[error("invalid window size {0}: must be even and positive")]
    InvalidWindow(usize),
    #[error("scan `{0}` has a constant target")]
    DegenerateTarget(String),
    #[error("scan `{0}` has fewer than two examples")]
    TooFewExamples(String),
    #[error("{subjects} distinct subjects cannot fill {k} folds")]
    TooFewSubjects { subjects: usize, k: usize },
    #[error("invalid fold request: {0}")]
    InvalidFolds(String),
    #[error("no statistics for scan `{0}`")]
    UnknownScan(String),
    #[error("incompatible datasets: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;
