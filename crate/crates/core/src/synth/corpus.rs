use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, gamma_kernel, gen_bold, gen_respiratory, inject_defects, rng, sign_mixed_weights,
    symmetric_kernel, BoldSynthModel, BreathingModel, DefectParams, Result, SynthError, SynthTrace,
};
use crate::dataset::RoiTimeseries;
use crate::par;
use crate::physio::{
    extract_target, DefectKind, Measure, QualityReport, RespiratoryTrace, TargetSeries, Verdict,
};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Causal gamma-shaped response peaking 3 TRs after the stimulus.
    Gamma,
    /// Gaussian centred on lag 0: the BOLD sample also reflects later
    /// targets.
    Symmetric,
}

impl KernelKind {
    pub fn kernel(self) -> (Vec<f64>, usize) {
        match self {
            KernelKind::Gamma => (gamma_kernel(), 0),
            KernelKind::Symmetric => (symmetric_kernel(3.0, 8), 8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_scans: usize,
    pub scans_per_subject: usize,
    pub n_volumes: usize,
    pub tr_seconds: f64,
    pub n_rois: usize,
    pub sample_rate_hz: f64,
    pub measure: Measure,
    pub kernel: KernelKind,
    /// Per-ROI signal std over noise std.
    pub snr: f64,
    /// Drift amplitude relative to the per-ROI signal std.
    pub drift_rel: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_scans: 50,
            scans_per_subject: 1,
            n_volumes: 478,
            tr_seconds: 0.8,
            n_rois: 90,
            sample_rate_hz: 100.0,
            measure: Measure::Rv,
            kernel: KernelKind::Gamma,
            snr: 1.0,
            drift_rel: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScan {
    pub scan_id: String,
    pub subject_id: String,
    pub trace: SynthTrace,
    pub target: TargetSeries,
    pub roi: RoiTimeseries,
}

fn breathing_for(seed: u64) -> BreathingModel {
    let mut r = rng(seed, 40);
    BreathingModel {
        base_rate_bpm: r.gen_range(12.0..20.0),
        depth: r.gen_range(0.8..1.2),
        rate_drift: 0.05,
        depth_drift: 0.1,
        deep_breath_rate: r.gen_range(0.5..2.0),
        deep_breath_gain: r.gen_range(2.0..3.0),
        noise_std: 0.02,
        seed,
    }
}

fn scan(cfg: &CorpusConfig, weights: &[f64], i: usize) -> Result<SynthScan> {
    let seed = derive_seed(cfg.seed, i as u64);
    let scan_id = format!("scan_{i:03}");
    let subject_id = format!("sub_{:03}", i / cfg.scans_per_subject.max(1));
    let duration = cfg.n_volumes as f64 * cfg.tr_seconds + 1.0;
    let mut st = gen_respiratory(&breathing_for(seed), duration.max(30.0), cfg.sample_rate_hz)?;
    st.trace.scan_id = scan_id.clone();
    let target = extract_target(&st.trace, cfg.measure, cfg.tr_seconds, cfg.n_volumes)?;

    let (kernel, kernel_origin) = cfg.kernel.kernel();
    let conv = super::convolve(&target.values, &kernel, kernel_origin);
    let mean_w = weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len().max(1) as f64;
    let signal_std = stats::pop_std(&conv) * mean_w;
    let model = BoldSynthModel {
        kernel,
        kernel_origin,
        roi_weights: weights.to_vec(),
        noise_std: if cfg.snr > 0.0 {
            signal_std / cfg.snr
        } else {
            0.0
        },
        drift_amplitude: signal_std * cfg.drift_rel,
        seed,
    };
    let mut roi = gen_bold(&target, &model, cfg.n_rois)?;
    roi.subject_id = Some(subject_id.clone());
    Ok(SynthScan {
        scan_id,
        subject_id,
        trace: st,
        target,
        roi,
    })
}

/// `cfg.n_scans` paired traces, targets and ROI matrices. ROI weights and
/// the kernel are shared by every scan; breathing differs per scan.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<SynthScan>> {
    if !(cfg.snr >= 0.0) || !(cfg.drift_rel >= 0.0) {
        return Err(SynthError::InvalidModel(
            "snr and drift_rel must be >= 0".into(),
        ));
    }
    let weights = sign_mixed_weights(cfg.n_rois, cfg.seed);
    par::map_range(cfg.n_scans, |i| scan(cfg, &weights, i))
        .into_iter()
        .collect()
}

/// A QC test case; `label` is `None` for a clean trace.
#[derive(Debug, Clone, PartialEq)]
pub struct QcCase {
    pub trace: RespiratoryTrace,
    pub label: Option<DefectKind>,
}

/// `n_per_class` clean traces plus `n_per_class` of each defect kind.
pub fn generate_qc_corpus(n_per_class: usize, seed: u64) -> Result<Vec<QcCase>> {
    let classes: Vec<Option<DefectKind>> = std::iter::once(None)
        .chain(DefectKind::ALL.into_iter().map(Some))
        .collect();
    let n = classes.len() * n_per_class;
    par::map_range(n, |i| {
        let label = classes[i / n_per_class];
        let s = derive_seed(seed, i as u64);
        let mut st = gen_respiratory(&breathing_for(s), 180.0, 100.0)?;
        let name = label.map_or("clean", |k| k.name());
        st.trace.scan_id = format!("qc_{name}_{:02}", i % n_per_class);
        let trace = match label {
            None => st.trace,
            Some(k) => inject_defects(&st.trace, k, &DefectParams::default(), s)?,
        };
        Ok(QcCase { trace, label })
    })
    .into_iter()
    .collect()
}

/// Whether a screening result agrees with the injected label class: clean
/// traces are usable, isolated spikes are usable after repair, and every
/// other defect makes the trace unusable with that defect reported.
pub fn label_matches(label: Option<DefectKind>, report: &QualityReport) -> bool {
    match label {
        None => report.verdict == Verdict::Usable,
        Some(DefectKind::RemovableSpikes) => report.verdict == Verdict::UsableAfterRepair,
        Some(k) => report.verdict == Verdict::Unusable && report.defects.contains(&k),
    }
}
