//! Per-scan z-scoring of ROI columns and targets.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::windows::ScanData;
use super::{DatasetError, Result, WindowedDataset};

/// Normalisation parameters of one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanNorm {
    pub roi_mean: Vec<f64>,
    pub roi_std: Vec<f64>,
    /// Columns with zero variance are centred but not scaled.
    pub zero_variance: Vec<bool>,
    pub target_mean: f64,
    pub target_std: f64,
}

/// A spread that is only rounding noise around the mean. An exactly
/// constant column can still give a std of ~1e-16 because the mean itself
/// is rounded.
fn negligible(std: f64, mean: f64) -> bool {
    std <= 1e-12 * mean.abs()
}

impl ScanNorm {
    /// Column statistics of a `[volumes x rois]` matrix; target stats are
    /// left at the identity (mean 0, std 1).
    pub fn fit_inputs(data: &Array2<f64>) -> Self {
        let n = data.nrows() as f64;
        let mut roi_mean = Vec::with_capacity(data.ncols());
        let mut roi_std = Vec::with_capacity(data.ncols());
        let mut zero_variance = Vec::with_capacity(data.ncols());
        for col in data.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            roi_mean.push(m);
            roi_std.push(s);
            zero_variance.push(negligible(s, m));
        }
        Self {
            roi_mean,
            roi_std,
            zero_variance,
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    /// Identity transform for `n_rois` columns.
    pub fn identity(n_rois: usize) -> Self {
        Self {
            roi_mean: vec![0.0; n_rois],
            roi_std: vec![1.0; n_rois],
            zero_variance: vec![false; n_rois],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn with_target(mut self, mean: f64, std: f64) -> Self {
        self.target_mean = mean;
        self.target_std = std;
        self
    }

    pub fn apply_inputs(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let m = self.roi_mean[j];
            if self.zero_variance[j] {
                col.mapv_inplace(|v| v - m);
            } else {
                let s = self.roi_std[j];
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        out
    }

    pub fn normalize_target(&self, v: f64) -> f64 {
        (v - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }
}

/// Normalisation parameters keyed by scan id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub scans: BTreeMap<String, ScanNorm>,
}

impl NormStats {
    pub fn get(&self, scan_id: &str) -> Result<&ScanNorm> {
        self.scans
            .get(scan_id)
            .ok_or_else(|| DatasetError::UnknownScan(scan_id.to_string()))
    }

    pub fn denormalize(&self, scan_id: &str, values: &[f64]) -> Result<Vec<f64>> {
        let s = self.get(scan_id)?;
        Ok(values.iter().map(|&z| s.denormalize_target(z)).collect())
    }
}

/// Z-scores every scan's ROI columns (over all of that scan's volumes) and
/// its targets (over its examples). With `stats` supplied those parameters
/// are applied instead of being refitted.
pub fn normalize(
    ds: &WindowedDataset,
    stats: Option<&NormStats>,
) -> Result<(WindowedDataset, NormStats)> {
    let mut out_stats = NormStats::default();
    let mut new_scans = Vec::with_capacity(ds.scans.len());
    for (s, scan) in ds.scans.iter().enumerate() {
        let norm = match stats {
            Some(st) => st.get(&scan.scan_id)?.clone(),
            None => {
                let t: Vec<f64> = ds
                    .examples
                    .iter()
                    .zip(&ds.targets)
                    .filter(|(e, _)| e.scan == s)
                    .map(|(_, &v)| v)
                    .collect();
                if t.len() < 2 {
                    return Err(DatasetError::TooFewExamples(scan.scan_id.clone()));
                }
                let m = t.iter().sum::<f64>() / t.len() as f64;
                let sd = (t.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t.len() as f64).sqrt();
                if negligible(sd, m) {
                    return Err(DatasetError::DegenerateTarget(scan.scan_id.clone()));
                }
                ScanNorm::fit_inputs(&scan.data).with_target(m, sd)
            }
        };
        if norm.roi_mean.len() != scan.data.ncols() {
            return Err(DatasetError::Incompatible(format!(
                "statistics for `{}` cover {} ROIs, data has {}",
                scan.scan_id,
                norm.roi_mean.len(),
                scan.data.ncols()
            )));
        }
        new_scans.push(Arc::new(ScanData {
            scan_id: scan.scan_id.clone(),
            data: norm.apply_inputs(&scan.data),
        }));
        out_stats.scans.insert(scan.scan_id.clone(), norm);
    }
    let targets = ds
        .examples
        .iter()
        .zip(&ds.targets)
        .map(|(e, &v)| out_stats.scans[&ds.scans[e.scan].scan_id].normalize_target(v))
        .collect();
    let out = WindowedDataset::from_parts(
        new_scans,
        ds.examples.clone(),
        targets,
        ds.alignment(),
        ds.window_size(),
        ds.n_rois(),
    );
    Ok((out, out_stats))
}
