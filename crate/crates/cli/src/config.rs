//! Run configuration: a TOML file with sections, overridden by
//! `--set section.key=value` flags, with every default filled in.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rvrecon::model::{ConvSpec, ModelConfig, TrainHyper};
use rvrecon::pipeline::CvConfig;
use rvrecon::synth::CorpusConfig;
use rvrecon::{AlignmentMode, Measure, QcThresholds};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub optimizer: OptimizerSection,
    pub qc: QcThresholds,
    pub synth: SynthSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub window_size: usize,
    pub alignment: AlignmentMode,
    pub measure: Measure,
    /// Volume spacing for `extract` when `--tr` is not given.
    pub tr_seconds: f64,
    pub k_folds: usize,
    pub seed: u64,
    pub normalize: bool,
    /// Keep every n-th training window.
    pub train_stride: usize,
    /// Sakoe-Chiba band for DTW; 0 means unconstrained.
    pub dtw_band: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        let cv = CvConfig::default();
        Self {
            window_size: cv.window_size,
            alignment: cv.alignment,
            measure: Measure::Rv,
            tr_seconds: 0.8,
            k_folds: cv.k_folds,
            seed: cv.seed,
            normalize: cv.normalize,
            train_stride: cv.train_stride,
            dtw_band: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub conv: Vec<ConvSpec>,
    pub head: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default_architecture(64, 1);
        Self {
            conv: m.conv_specs,
            head: m.head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub patience: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let h = TrainHyper::default();
        Self {
            epochs: h.epochs,
            batch_size: h.batch_size,
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            patience: h.patience,
        }
    }
}

/// Generator settings for `synth`; the seed comes from `run.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_scans: usize,
    pub scans_per_subject: usize,
    pub n_volumes: usize,
    pub tr_seconds: f64,
    pub n_rois: usize,
    pub sample_rate_hz: f64,
    pub kernel: rvrecon::synth::KernelKind,
    pub snr: f64,
    pub drift_rel: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = CorpusConfig::default();
        Self {
            n_scans: c.n_scans,
            scans_per_subject: c.scans_per_subject,
            n_volumes: c.n_volumes,
            tr_seconds: c.tr_seconds,
            n_rois: c.n_rois,
            sample_rate_hz: c.sample_rate_hz,
            kernel: c.kernel,
            snr: c.snr,
            drift_rel: c.drift_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Output directory for `train` and `synth` when `--out` is not given.
    pub out: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and checks the
    /// result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let w = self.run.window_size;
        if w < 8 || !w.is_multiple_of(2) {
            bail!("run.window_size must be even and at least 8, got {w}");
        }
        if !(self.run.tr_seconds > 0.0 && self.run.tr_seconds.is_finite()) {
            bail!("run.tr_seconds must be positive");
        }
        if self.run.k_folds == 0 {
            bail!("run.k_folds must be at least 1");
        }
        if self.run.train_stride == 0 {
            bail!("run.train_stride must be at least 1");
        }
        if self.model.head.last() != Some(&1) {
            bail!("model.head must end with a layer of width 1");
        }
        Ok(())
    }

    /// The resolved configuration as TOML, for echoing at start-up.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            window_size: self.run.window_size,
            alignment: self.run.alignment,
            k_folds: self.run.k_folds,
            seed: self.run.seed,
            normalize: self.run.normalize,
            train_stride: self.run.train_stride,
            dtw_band: self.dtw_band(),
            conv_specs: self.model.conv.clone(),
            head: self.model.head.clone(),
            hyper: TrainHyper {
                epochs: self.optimizer.epochs,
                batch_size: self.optimizer.batch_size,
                lr: self.optimizer.lr,
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                eps: self.optimizer.eps,
                seed: self.run.seed,
                patience: self.optimizer.patience,
            },
        }
    }

    pub fn dtw_band(&self) -> Option<usize> {
        (self.run.dtw_band > 0).then_some(self.run.dtw_band)
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        let s = &self.synth;
        CorpusConfig {
            n_scans: s.n_scans,
            scans_per_subject: s.scans_per_subject,
            n_volumes: s.n_volumes,
            tr_seconds: s.tr_seconds,
            n_rois: s.n_rois,
            sample_rate_hz: s.sample_rate_hz,
            measure: self.run.measure,
            kernel: s.kernel,
            snr: s.snr,
            drift_rel: s.drift_rel,
            seed: self.run.seed,
        }
    }
}

/// `section.key=value`. The value is read as a TOML value when it parses
/// as one and as a bare string otherwise, so `run.alignment=end` works
/// without quotes.
fn apply_override(table: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form section.key=value"))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override `{spec}` has an empty key segment");
    }
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{s}` in override `{spec}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
