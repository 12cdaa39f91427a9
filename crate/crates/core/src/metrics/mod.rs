//! Agreement metrics between a reconstructed and a measured series, and
//! per-fold box-plot summaries.

mod dtw;
mod summary;

pub use dtw::dtw;
pub use summary::{
    five_number, summarize_all, summarize_folds, FiveNumber, FoldSummary, MetricSummary,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AlignmentMode;
use crate::physio::Measure;
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("need at least two points, got {0}")]
    TooShort(usize),
    #[error("constant input: metric undefined")]
    ConstantInput,
    #[error("band {band} cannot connect sequences whose lengths differ by {diff}")]
    InfeasibleBand { band: usize, diff: usize },
    #[error("scan `{0}` is not in the fold plan")]
    UnknownScan(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

pub const METRIC_NAMES: [&str; 5] = ["mae", "mse", "r_squared", "pearson_r", "dtw"];

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `1 - SS_res / SS_tot`; negative when worse than predicting the mean.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    if pred.len() < 2 {
        return Err(MetricError::TooShort(pred.len()));
    }
    let m = mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 || stats::is_constant(truth) {
        return Err(MetricError::ConstantInput);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn pearson_r(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    if pred.len() < 2 {
        return Err(MetricError::TooShort(pred.len()));
    }
    if stats::is_constant(pred) || stats::is_constant(truth) {
        return Err(MetricError::ConstantInput);
    }
    let (mp, mt) = (mean(pred), mean(truth));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Metrics of one scan's reconstruction over the covered volumes.
/// `r_squared` and `pearson_r` are `None` when undefined for constant input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scan_id: String,
    pub measure: Measure,
    pub alignment: AlignmentMode,
    pub n_points: usize,
    pub mae: f64,
    pub mse: f64,
    pub r_squared: Option<f64>,
    pub pearson_r: Option<f64>,
    pub dtw: f64,
}

impl MetricReport {
    pub fn compute(
        scan_id: &str,
        measure: Measure,
        alignment: AlignmentMode,
        pred: &[f64],
        truth: &[f64],
        dtw_band: Option<usize>,
    ) -> Result<Self> {
        let undefined_ok = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(MetricError::ConstantInput) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            scan_id: scan_id.to_string(),
            measure,
            alignment,
            n_points: pred.len(),
            mae: mae(pred, truth)?,
            mse: mse(pred, truth)?,
            r_squared: undefined_ok(r_squared(pred, truth))?,
            pearson_r: undefined_ok(pearson_r(pred, truth))?,
            dtw: dtw(pred, truth, dtw_band)?,
        })
    }

    /// Value of a metric by name (see [`METRIC_NAMES`]).
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mae" => Some(self.mae),
            "mse" => Some(self.mse),
            "r_squared" => self.r_squared,
            "pearson_r" => self.pearson_r,
            "dtw" => Some(self.dtw),
            _ => None,
        }
    }
}
