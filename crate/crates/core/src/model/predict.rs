use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::network::{batch_input, pack_windows};
use super::{ModelError, Network, Result};
use crate::dataset::{window_starts, AlignmentMode, RoiTimeseries, ScanNorm, WindowedDataset};

/// Reconstructed target values for the volumes a window can reach.
/// `values[j]` belongs to volume `start_index + j`; the remaining edge
/// volumes have no prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub scan_id: String,
    pub alignment: AlignmentMode,
    pub window_size: usize,
    pub start_index: usize,
    pub n_volumes: usize,
    pub tr_seconds: f64,
    pub values: Vec<f64>,
}

impl Reconstruction {
    pub fn value_at(&self, volume: usize) -> Option<f64> {
        volume
            .checked_sub(self.start_index)
            .and_then(|j| self.values.get(j).copied())
    }

    pub fn covered(&self) -> std::ops::Range<usize> {
        self.start_index..self.start_index + self.values.len()
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# scan_id={}", self.scan_id)?;
        writeln!(w, "# alignment={}", self.alignment.as_str())?;
        writeln!(w, "# window_size={}", self.window_size)?;
        writeln!(w, "# n_volumes={}", self.n_volumes)?;
        writeln!(w, "# tr_seconds={}", self.tr_seconds)?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(w, "{}\t{v}", self.start_index + j)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |msg: String| ModelError::Format(msg);
        let mut scan_id = None;
        let mut alignment = None;
        let mut window_size = None;
        let mut n_volumes = None;
        let mut tr = None;
        let mut start = None;
        let mut values = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.trim().split_once('=') {
                    let v = v.trim();
                    let num = |what: &str| bad(format!("line {}: bad {what} `{v}`", ln + 1));
                    match k.trim() {
                        "scan_id" => scan_id = Some(v.to_string()),
                        "alignment" => alignment = Some(v.parse().map_err(|_| num("alignment"))?),
                        "window_size" => {
                            window_size = Some(v.parse().map_err(|_| num("window_size"))?)
                        }
                        "n_volumes" => n_volumes = Some(v.parse().map_err(|_| num("n_volumes"))?),
                        "tr_seconds" => tr = Some(v.parse().map_err(|_| num("tr_seconds"))?),
                        _ => {}
                    }
                }
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("line {}: expected `volume<TAB>value`", ln + 1)))?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| bad(format!("line {}: bad volume", ln + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("line {}: bad value", ln + 1)))?;
            match start {
                None => start = Some(k),
                Some(s) if k != s + values.len() => {
                    return Err(bad(format!(
                        "line {}: volume indices must be consecutive",
                        ln + 1
                    )))
                }
                _ => {}
            }
            values.push(v);
        }
        let missing = |k: &str| bad(format!("missing `# {k}=` header"));
        Ok(Self {
            scan_id: scan_id.ok_or_else(|| missing("scan_id"))?,
            alignment: alignment.ok_or_else(|| missing("alignment"))?,
            window_size: window_size.ok_or_else(|| missing("window_size"))?,
            n_volumes: n_volumes.ok_or_else(|| missing("n_volumes"))?,
            tr_seconds: tr.ok_or_else(|| missing("tr_seconds"))?,
            start_index: start.unwrap_or(0),
            values,
        })
    }
}

/// Forward pass over every example of a (normalised) dataset, `chunk`
/// examples at a time.
pub fn predict_dataset(net: &Network, ds: &WindowedDataset, chunk: usize) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::with_capacity(ds.len());
    for c in idx.chunks(chunk.max(1)) {
        out.extend_from_slice(net.forward(&batch_input(ds, c))?.data());
    }
    Ok(out)
}

/// [`predict_series_with`] in chunks of 128 windows.
pub fn predict_series(
    net: &Network,
    roi: &RoiTimeseries,
    alignment: AlignmentMode,
    norm: &ScanNorm,
) -> Result<Reconstruction> {
    predict_series_with(net, roi, alignment, norm, 128)
}

/// Normalises the ROI matrix with `norm`, predicts every window and maps the
/// outputs back to target units with `norm`'s target statistics.
pub fn predict_series_with(
    net: &Network,
    roi: &RoiTimeseries,
    alignment: AlignmentMode,
    norm: &ScanNorm,
    chunk: usize,
) -> Result<Reconstruction> {
    let cfg = &net.config;
    if roi.n_rois() != cfg.n_rois || norm.roi_mean.len() != cfg.n_rois {
        return Err(ModelError::ShapeMismatch(format!(
            "model expects {} ROIs, scan has {} (statistics for {})",
            cfg.n_rois,
            roi.n_rois(),
            norm.roi_mean.len()
        )));
    }
    let starts = window_starts(roi.n_volumes(), cfg.window_size, alignment)?;
    let data = norm.apply_inputs(&roi.data);
    let mut values = Vec::with_capacity(starts.len());
    for c in starts.chunks(chunk.max(1)) {
        let s: Vec<usize> = c.iter().map(|&(s, _)| s).collect();
        let y = net.forward(&pack_windows(data.view(), &s, cfg.window_size))?;
        values.extend(y.data().iter().map(|&z| norm.denormalize_target(z)));
    }
    Ok(Reconstruction {
        scan_id: roi.scan_id.clone(),
        alignment,
        window_size: cfg.window_size,
        start_index: starts.first().map_or(0, |&(_, t)| t),
        n_volumes: roi.n_volumes(),
        tr_seconds: roi.tr_seconds,
        values,
    })
}
