//! Fixed-size BOLD windows paired with one scalar target each.
//!
//! Windows share their scan's ROI matrix instead of copying rows: at
//! 50 scans x 414 windows x 64 x 90 a copied tensor would be close to 1 GB.
//! [`WindowedDataset::input`] hands out `[window x rois]` views.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, RoiTimeseries};
use crate::physio::TargetSeries;

/// Where in the window the regression target sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentMode {
    /// Target at offset `window / 2`: half a window of context on each side.
    Middle,
    /// Target at the last row of the window: past context only.
    End,
}

impl AlignmentMode {
    pub fn target_offset(self, window_size: usize) -> usize {
        match self {
            AlignmentMode::Middle => window_size / 2,
            AlignmentMode::End => window_size - 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMode::Middle => "middle",
            AlignmentMode::End => "end",
        }
    }
}

impl std::str::FromStr for AlignmentMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "middle" | "method1" => Ok(AlignmentMode::Middle),
            "end" | "method2" => Ok(AlignmentMode::End),
            other => Err(format!(
                "unknown alignment `{other}` (expected middle or end)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    /// Index into the dataset's scan list.
    pub scan: usize,
    /// First volume of the input window.
    pub start: usize,
    /// Volume whose target value this example regresses.
    pub target_index: usize,
}

#[derive(Debug)]
pub(crate) struct ScanData {
    pub scan_id: String,
    pub data: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub(crate) scans: Vec<Arc<ScanData>>,
    pub(crate) examples: Vec<Example>,
    pub(crate) targets: Vec<f64>,
    alignment: AlignmentMode,
    window_size: usize,
    n_rois: usize,
}

/// Window start volumes and matching target volumes for a scan of
/// `n_volumes`: exactly `n_volumes - window_size` examples in both modes.
pub fn window_starts(
    n_volumes: usize,
    window_size: usize,
    alignment: AlignmentMode,
) -> Result<Vec<(usize, usize)>> {
    if window_size == 0 || !window_size.is_multiple_of(2) {
        return Err(DatasetError::InvalidWindow(window_size));
    }
    if window_size >= n_volumes {
        return Err(DatasetError::WindowTooLarge {
            window: window_size,
            n_volumes,
        });
    }
    let off = alignment.target_offset(window_size);
    Ok((0..n_volumes - window_size).map(|j| (j, j + off)).collect())
}

pub fn build_windows(
    roi: &RoiTimeseries,
    target: &TargetSeries,
    window_size: usize,
    alignment: AlignmentMode,
) -> Result<WindowedDataset> {
    if target.n_volumes != roi.n_volumes() || target.values.len() != roi.n_volumes() {
        return Err(DatasetError::LengthMismatch(format!(
            "target has {} volumes, ROI matrix has {}",
            target.values.len(),
            roi.n_volumes()
        )));
    }
    let starts = window_starts(roi.n_volumes(), window_size, alignment)?;
    let examples: Vec<Example> = starts
        .iter()
        .map(|&(start, target_index)| Example {
            scan: 0,
            start,
            target_index,
        })
        .collect();
    let targets = examples
        .iter()
        .map(|e| target.values[e.target_index])
        .collect();
    Ok(WindowedDataset {
        scans: vec![Arc::new(ScanData {
            scan_id: roi.scan_id.clone(),
            data: roi.data.clone(),
        })],
        examples,
        targets,
        alignment,
        window_size,
        n_rois: roi.n_rois(),
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn alignment(&self) -> AlignmentMode {
        self.alignment
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `[window x rois]` input block of example `i`.
    pub fn input(&self, i: usize) -> ArrayView2<'_, f64> {
        let e = self.examples[i];
        self.scans[e.scan]
            .data
            .slice_axis(Axis(0), (e.start..e.start + self.window_size).into())
    }

    pub fn target_volume_indices(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.target_index).collect()
    }

    pub fn scan_id(&self, i: usize) -> &str {
        &self.scans[self.examples[i].scan].scan_id
    }

    /// Per-example scan provenance.
    pub fn scan_ids(&self) -> Vec<&str> {
        (0..self.len()).map(|i| self.scan_id(i)).collect()
    }

    /// Distinct scans in first-appearance order.
    pub fn scan_names(&self) -> Vec<&str> {
        self.scans.iter().map(|s| s.scan_id.as_str()).collect()
    }

    /// Joins datasets built with the same window, alignment and ROI count.
    pub fn concat(parts: &[WindowedDataset]) -> Result<WindowedDataset> {
        let first = parts
            .first()
            .ok_or_else(|| DatasetError::Incompatible("nothing to concatenate".into()))?;
        let mut out = WindowedDataset {
            scans: Vec::new(),
            examples: Vec::new(),
            targets: Vec::new(),
            alignment: first.alignment,
            window_size: first.window_size,
            n_rois: first.n_rois,
        };
        for p in parts {
            if p.alignment != out.alignment
                || p.window_size != out.window_size
                || p.n_rois != out.n_rois
            {
                return Err(DatasetError::Incompatible(format!(
                    "window {}/{:?}/{} rois vs {}/{:?}/{} rois",
                    p.window_size,
                    p.alignment,
                    p.n_rois,
                    out.window_size,
                    out.alignment,
                    out.n_rois
                )));
            }
            let base = out.scans.len();
            out.scans.extend(p.scans.iter().cloned());
            out.examples.extend(p.examples.iter().map(|e| Example {
                scan: e.scan + base,
                ..*e
            }));
            out.targets.extend_from_slice(&p.targets);
        }
        Ok(out)
    }

    /// Splits into one dataset per scan, preserving order.
    pub fn split_by_scan(&self) -> Vec<WindowedDataset> {
        (0..self.scans.len())
            .map(|s| {
                let idx: Vec<usize> = (0..self.len())
                    .filter(|&i| self.examples[i].scan == s)
                    .collect();
                WindowedDataset {
                    scans: vec![self.scans[s].clone()],
                    examples: idx
                        .iter()
                        .map(|&i| Example {
                            scan: 0,
                            ..self.examples[i]
                        })
                        .collect(),
                    targets: idx.iter().map(|&i| self.targets[i]).collect(),
                    alignment: self.alignment,
                    window_size: self.window_size,
                    n_rois: self.n_rois,
                }
            })
            .collect()
    }

    /// Every `stride`-th example of each scan (stride 1 is the identity).
    pub fn thinned(&self, stride: usize) -> WindowedDataset {
        let stride = stride.max(1);
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let e = self.examples[i];
                e.start.is_multiple_of(stride)
            })
            .collect();
        WindowedDataset {
            scans: self.scans.clone(),
            examples: keep.iter().map(|&i| self.examples[i]).collect(),
            targets: keep.iter().map(|&i| self.targets[i]).collect(),
            alignment: self.alignment,
            window_size: self.window_size,
            n_rois: self.n_rois,
        }
    }

    pub(crate) fn from_parts(
        scans: Vec<Arc<ScanData>>,
        examples: Vec<Example>,
        targets: Vec<f64>,
        alignment: AlignmentMode,
        window_size: usize,
        n_rois: usize,
    ) -> Self {
        Self {
            scans,
            examples,
            targets,
            alignment,
            window_size,
            n_rois,
        }
    }
}
