//! Reconstruction of low-frequency respiratory measures (RV and RVT) from
//! ROI-averaged BOLD timeseries.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`physio`] reads respiratory-belt traces, screens them for recording
//!   defects, repairs spikes and extracts RV / RVT on the fMRI TR grid.
//! * [`dataset`] loads ROI matrices, cuts them into fixed-size windows paired
//!   with a scalar target and plans subject-level cross-validation folds.
//! * [`model`] is a small 1D convolutional regressor with hand-written
//!   forward/backward passes, Adam and a versioned weight format.
//! * [`metrics`] holds MAE, MSE, R², Pearson r, DTW and box-plot summaries.
//! * [`synth`] generates breathing traces, defect-injected QC cases and
//!   multi-ROI BOLD data with a known respiratory dependence.
//! * [`pipeline`] runs k-fold training and evaluation end to end.
//!
//! Batch work (per-scan QC, per-fold training, per-scan evaluation) goes
//! through [`par`], which uses rayon when the `parallel` feature is enabled
//! and plain iteration otherwise. Results never depend on the thread count.

pub mod dataset;
pub mod metrics;
pub mod model;
pub mod par;
pub mod physio;
pub mod pipeline;
pub(crate) mod stats;
pub mod synth;

pub use dataset::{AlignmentMode, FoldPlan, NormStats, RoiTimeseries, WindowedDataset};
pub use metrics::{FoldSummary, MetricReport};
pub use model::{ModelConfig, TrainHyper, TrainState};
pub use physio::{
    DefectKind, Measure, QcThresholds, QualityReport, RespiratoryTrace, TargetSeries, Verdict,
};
