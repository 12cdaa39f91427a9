//! k-fold training and evaluation over a set of scans.
//!
//! For fold `f` the held-out test scans are fold `f`. With `k >= 3` the next
//! fold, `(f + 1) % k`, is the validation set for checkpoint selection and
//! the rest is training data; with `k = 2` there is no validation set and
//! with `k = 1` the model trains and tests on everything (smoke runs only).
//!
//! Inputs are z-scored per scan. Training targets are z-scored per scan;
//! held-out predictions are mapped back to target units with the mean of the
//! training scans' target means and standard deviations, since a test scan's
//! own target statistics are unknown at inference time.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    build_windows, make_folds, normalize, AlignmentMode, DatasetError, FoldPlan, RoiTimeseries,
    ScanNorm, WindowedDataset,
};
use crate::metrics::{summarize_all, summarize_folds, FoldSummary, MetricError, MetricReport};
use crate::model::{
    predict_series, train, ConvSpec, EpochRecord, ModelConfig, ModelError, Network, Reconstruction,
    TrainHyper, TrainState,
};
use crate::par;
use crate::physio::TargetSeries;
use crate::synth::SynthScan;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("fold {0} has no scans with a usable target to train on")]
    NoTrainableScans(usize),
    #[error("scan `{0}`: {1}")]
    Scan(String, String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// One scan's BOLD matrix and its measured respiratory target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanInput {
    pub scan_id: String,
    pub subject_id: String,
    pub roi: RoiTimeseries,
    pub target: TargetSeries,
}

impl From<SynthScan> for ScanInput {
    fn from(s: SynthScan) -> Self {
        Self {
            scan_id: s.scan_id,
            subject_id: s.subject_id,
            roi: s.roi,
            target: s.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub window_size: usize,
    pub alignment: AlignmentMode,
    pub k_folds: usize,
    pub seed: u64,
    /// Z-score inputs and targets. When off, raw values are used throughout.
    pub normalize: bool,
    /// Keep every n-th training window per scan (1 keeps all).
    pub train_stride: usize,
    pub dtw_band: Option<usize>,
    pub conv_specs: Vec<ConvSpec>,
    pub head: Vec<usize>,
    pub hyper: TrainHyper,
}

impl Default for CvConfig {
    fn default() -> Self {
        let arch = ModelConfig::default_architecture(64, 1);
        Self {
            window_size: 64,
            alignment: AlignmentMode::Middle,
            k_folds: 10,
            seed: 0,
            normalize: true,
            train_stride: 1,
            dtw_band: None,
            conv_specs: arch.conv_specs,
            head: arch.head,
            hyper: TrainHyper::default(),
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 8 || !self.window_size.is_multiple_of(2) {
            return Err(PipelineError::InvalidConfig(format!(
                "window_size must be even and >= 8, got {}",
                self.window_size
            )));
        }
        if self.k_folds == 0 {
            return Err(PipelineError::InvalidConfig("k_folds must be >= 1".into()));
        }
        if self.train_stride == 0 {
            return Err(PipelineError::InvalidConfig(
                "train_stride must be >= 1".into(),
            ));
        }
        self.model_config(1, 0).validate()?;
        Ok(())
    }

    pub fn model_config(&self, n_rois: usize, fold: usize) -> ModelConfig {
        ModelConfig {
            window_size: self.window_size,
            n_rois,
            conv_specs: self.conv_specs.clone(),
            head: self.head.clone(),
            seed: fold_seed(self.seed, fold, 0),
        }
    }
}

fn fold_seed(seed: u64, fold: usize, purpose: u64) -> u64 {
    crate::synth::derive_seed(
        seed ^ purpose.wrapping_mul(0xA076_1D64_78BD_642F),
        fold as u64,
    )
}

/// Target statistics used to map network outputs back to target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub const IDENTITY: TargetScale = TargetScale {
        mean: 0.0,
        std: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_scans: Vec<String>,
    pub val_scans: Vec<String>,
    pub test_scans: Vec<String>,
    /// Training-fold scans left out because their target is constant.
    pub excluded_scans: Vec<String>,
    pub n_train_examples: usize,
    pub target_scale: TargetScale,
    pub state: TrainState,
    pub reports: Vec<MetricReport>,
    pub reconstructions: Vec<Reconstruction>,
}

impl FoldOutcome {
    pub fn best_epoch(&self) -> Option<usize> {
        self.state
            .history
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .map(|r| r.epoch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub config: CvConfig,
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
}

impl CvResult {
    pub fn reports(&self) -> Vec<MetricReport> {
        self.folds
            .iter()
            .flat_map(|f| f.reports.iter().cloned())
            .collect()
    }

    pub fn summaries(&self) -> Result<Vec<FoldSummary>> {
        Ok(summarize_folds(&self.reports(), &self.plan)?)
    }

    /// Held-out Pearson r of every scan where it is defined.
    pub fn pearson_values(&self) -> Vec<f64> {
        self.folds
            .iter()
            .flat_map(|f| f.reports.iter().filter_map(|r| r.pearson_r))
            .collect()
    }

    /// Writes the JSON-lines metric stream: config, fold plan, then per fold
    /// a training record and one metric record per test scan, then the fold
    /// summaries and a pooled summary.
    pub fn write_stream<W: Write>(&self, mut w: W) -> Result<()> {
        write_record(&mut w, "config", &self.config)?;
        write_record(&mut w, "fold_plan", &self.plan)?;
        for f in &self.folds {
            let rec = FoldRecord {
                fold: f.fold,
                train_scans: f.train_scans.len(),
                val_scans: f.val_scans.len(),
                test_scans: f.test_scans.len(),
                excluded_scans: &f.excluded_scans,
                n_train_examples: f.n_train_examples,
                best_epoch: f.best_epoch(),
                target_scale: f.target_scale,
                history: &f.state.history,
            };
            write_record(&mut w, "fold", &rec)?;
            for r in &f.reports {
                write_record(
                    &mut w,
                    "metric",
                    &FoldMetric {
                        fold: f.fold,
                        report: r.clone(),
                    },
                )?;
            }
        }
        for s in self.summaries()? {
            write_record(&mut w, "fold_summary", &s)?;
        }
        write_record(&mut w, "fold_summary", &summarize_all(&self.reports()))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct FoldRecord<'a> {
    fold: usize,
    train_scans: usize,
    val_scans: usize,
    test_scans: usize,
    excluded_scans: &'a [String],
    n_train_examples: usize,
    best_epoch: Option<usize>,
    target_scale: TargetScale,
    history: &'a [EpochRecord],
}

/// A metric record as it appears in the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetric {
    pub fold: usize,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    record: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes one `{"record": kind, ...}` JSON line.
pub fn write_record<W: Write + ?Sized, T: Serialize>(
    w: &mut W,
    kind: &str,
    body: &T,
) -> Result<()> {
    serde_json::to_writer(&mut *w, &Tagged { record: kind, body })?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Scan norm for prediction: the scan's own input statistics and the
/// supplied target scale.
fn inference_norm(roi: &RoiTimeseries, scale: TargetScale, normalize: bool) -> ScanNorm {
    let base = if normalize {
        ScanNorm::fit_inputs(&roi.data)
    } else {
        ScanNorm::identity(roi.n_rois())
    };
    base.with_target(scale.mean, scale.std)
}

/// Reconstructs one scan with `net` and scores it against its target over
/// the covered volumes.
pub fn evaluate_scan(
    net: &Network,
    scan: &ScanInput,
    alignment: AlignmentMode,
    scale: TargetScale,
    normalize: bool,
    dtw_band: Option<usize>,
) -> Result<(MetricReport, Reconstruction)> {
    if scan.target.values.len() != scan.roi.n_volumes() {
        return Err(DatasetError::LengthMismatch(format!(
            "scan `{}`: target has {} volumes, ROI matrix has {}",
            scan.scan_id,
            scan.target.values.len(),
            scan.roi.n_volumes()
        ))
        .into());
    }
    let rec = predict_series(
        net,
        &scan.roi,
        alignment,
        &inference_norm(&scan.roi, scale, normalize),
    )?;
    let truth = &scan.target.values[rec.covered()];
    let report = MetricReport::compute(
        &scan.scan_id,
        scan.target.measure,
        alignment,
        &rec.values,
        truth,
        dtw_band,
    )?;
    Ok((report, rec))
}

struct Prepared {
    /// Normalised windows, or `None` when the scan's target is constant.
    windows: Option<(WindowedDataset, TargetScale)>,
}

fn prepare(scan: &ScanInput, cfg: &CvConfig) -> Result<Prepared> {
    let raw = build_windows(&scan.roi, &scan.target, cfg.window_size, cfg.alignment)?;
    if !cfg.normalize {
        let t = raw.targets();
        let constant = t.iter().all(|&v| v == t[0]);
        return Ok(Prepared {
            windows: (!constant).then_some((raw, TargetScale::IDENTITY)),
        });
    }
    match normalize(&raw, None) {
        Ok((ds, stats)) => {
            let s = stats.get(&scan.scan_id)?;
            Ok(Prepared {
                windows: Some((
                    ds,
                    TargetScale {
                        mean: s.target_mean,
                        std: s.target_std,
                    },
                )),
            })
        }
        Err(DatasetError::DegenerateTarget(_)) => Ok(Prepared { windows: None }),
        Err(e) => Err(e.into()),
    }
}

fn subset(
    prepared: &[Prepared],
    scans: &[ScanInput],
    ids: &[String],
    stride: usize,
) -> Result<Option<WindowedDataset>> {
    let parts: Vec<WindowedDataset> = scans
        .iter()
        .zip(prepared)
        .filter(|(s, _)| ids.contains(&s.scan_id))
        .filter_map(|(_, p)| p.windows.as_ref().map(|(d, _)| d.thinned(stride)))
        .collect();
    if parts.is_empty() {
        return Ok(None);
    }
    Ok(Some(WindowedDataset::concat(&parts)?))
}

fn run_fold(
    fold: usize,
    cfg: &CvConfig,
    plan: &FoldPlan,
    scans: &[ScanInput],
    prepared: &[Prepared],
) -> Result<FoldOutcome> {
    let k = cfg.k_folds;
    let val_fold = (k >= 3).then_some((fold + 1) % k);
    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    let mut test_ids = Vec::new();
    let mut excluded = Vec::new();
    for (s, p) in scans.iter().zip(prepared) {
        let f = plan.fold_of(&s.scan_id).expect("plan covers every scan");
        if f == fold {
            test_ids.push(s.scan_id.clone());
        }
        let role = if k == 1 {
            Some(&mut train_ids)
        } else if f == fold {
            None
        } else if Some(f) == val_fold {
            Some(&mut val_ids)
        } else {
            Some(&mut train_ids)
        };
        if let Some(role) = role {
            if p.windows.is_some() {
                role.push(s.scan_id.clone());
            } else {
                excluded.push(s.scan_id.clone());
            }
        }
    }

    let train_ds = subset(prepared, scans, &train_ids, cfg.train_stride)?
        .ok_or(PipelineError::NoTrainableScans(fold))?;
    let val_ds = subset(prepared, scans, &val_ids, cfg.train_stride)?;

    let scales: Vec<TargetScale> = scans
        .iter()
        .zip(prepared)
        .filter(|(s, _)| train_ids.contains(&s.scan_id))
        .filter_map(|(_, p)| p.windows.as_ref().map(|(_, sc)| *sc))
        .collect();
    let n = scales.len() as f64;
    let target_scale = TargetScale {
        mean: scales.iter().map(|s| s.mean).sum::<f64>() / n,
        std: scales.iter().map(|s| s.std).sum::<f64>() / n,
    };

    let model_cfg = cfg.model_config(train_ds.n_rois(), fold);
    let hyper = TrainHyper {
        seed: fold_seed(cfg.seed, fold, 1),
        ..cfg.hyper.clone()
    };
    let state = train(&train_ds, val_ds.as_ref(), &model_cfg, &hyper)?;

    let mut reports = Vec::new();
    let mut reconstructions = Vec::new();
    for s in scans.iter().filter(|s| test_ids.contains(&s.scan_id)) {
        let (r, rec) = evaluate_scan(
            &state.network,
            s,
            cfg.alignment,
            target_scale,
            cfg.normalize,
            cfg.dtw_band,
        )?;
        reports.push(r);
        reconstructions.push(rec);
    }
    Ok(FoldOutcome {
        fold,
        train_scans: train_ids,
        val_scans: val_ids,
        test_scans: test_ids,
        excluded_scans: excluded,
        n_train_examples: train_ds.len(),
        target_scale,
        state,
        reports,
        reconstructions,
    })
}

/// Runs k-fold training and held-out evaluation. Folds run in parallel
/// when the `parallel` feature is on; results do not depend on it.
pub fn cross_validate(scans: &[ScanInput], cfg: &CvConfig) -> Result<CvResult> {
    cfg.validate()?;
    if scans.is_empty() {
        return Err(PipelineError::InvalidConfig("no scans".into()));
    }
    let n_rois = scans[0].roi.n_rois();
    for s in scans {
        if s.roi.n_rois() != n_rois {
            return Err(DatasetError::Incompatible(format!(
                "scan `{}` has {} ROIs, expected {n_rois}",
                s.scan_id,
                s.roi.n_rois()
            ))
            .into());
        }
    }
    let index: Vec<(String, String)> = scans
        .iter()
        .map(|s| (s.scan_id.clone(), s.subject_id.clone()))
        .collect();
    let plan = make_folds(&index, cfg.k_folds, cfg.seed)?;
    let prepared: Vec<Prepared> = par::map(scans, |s| prepare(s, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let folds = par::map_range(cfg.k_folds, |f| run_fold(f, cfg, &plan, scans, &prepared))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CvResult {
        config: cfg.clone(),
        plan,
        folds,
    })
}
