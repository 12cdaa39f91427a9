//! Recording-quality screening for belt traces.
//!
//! Every reported defect is backed by an entry in [`QualityReport::stats`]
//! that crossed the matching threshold in [`QcThresholds`]. Checks other than
//! flatline run on the despiked trace, which is what makes spikes
//! "removable": they are repaired and nothing else is wrong afterwards.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{despike_with_mask, RespiratoryTrace, Result};
use crate::stats;

/// Recording defects, one per failure mode seen in real belt data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    RemovableSpikes,
    UnremovableSpikes,
    PartialRecording,
    Flatline,
    NarrowRange,
    SamplingAnomaly,
    ConnectionChange,
}

impl DefectKind {
    pub const ALL: [DefectKind; 7] = [
        DefectKind::RemovableSpikes,
        DefectKind::UnremovableSpikes,
        DefectKind::PartialRecording,
        DefectKind::Flatline,
        DefectKind::NarrowRange,
        DefectKind::SamplingAnomaly,
        DefectKind::ConnectionChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefectKind::RemovableSpikes => "removable_spikes",
            DefectKind::UnremovableSpikes => "unremovable_spikes",
            DefectKind::PartialRecording => "partial_recording",
            DefectKind::Flatline => "flatline",
            DefectKind::NarrowRange => "narrow_range",
            DefectKind::SamplingAnomaly => "sampling_anomaly",
            DefectKind::ConnectionChange => "connection_change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Usable,
    UsableAfterRepair,
    Unusable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcThresholds {
    /// Flatline when std < flatline_eps * (max - min), or the trace is constant.
    pub flatline_eps: f64,
    /// Narrow range when the median windowed range is below this fraction of
    /// the full dynamic range.
    pub narrow_range_frac: f64,
    /// Window length for the typical-range estimate.
    pub narrow_window_s: f64,
    /// Partial recording when the longest constant run exceeds this fraction.
    pub partial_frac: f64,
    /// Sampling anomaly when this fraction of consecutive samples repeat.
    pub repeated_frac: f64,
    /// Connection change threshold in robust sigmas.
    pub connection_change_sigmas: f64,
    pub despike_window_s: f64,
    pub despike_sigmas: f64,
    /// Samples this many global robust sigmas from the median after repair
    /// count as residual spikes.
    pub residual_outlier_sigmas: f64,
    /// Spikes are unremovable when any despike window had more than this
    /// fraction of its samples replaced.
    pub max_spike_density: f64,
}

impl Default for QcThresholds {
    fn default() -> Self {
        Self {
            flatline_eps: 1e-6,
            narrow_range_frac: 0.05,
            narrow_window_s: 10.0,
            partial_frac: 0.2,
            repeated_frac: 0.5,
            connection_change_sigmas: 5.0,
            despike_window_s: 1.0,
            despike_sigmas: 6.0,
            residual_outlier_sigmas: 12.0,
            max_spike_density: 0.2,
        }
    }
}

impl QcThresholds {
    /// Despike window in samples: odd, at least 3.
    pub fn despike_window_samples(&self, sample_rate_hz: f64) -> usize {
        let w = (self.despike_window_s * sample_rate_hz).round().max(3.0) as usize;
        if w.is_multiple_of(2) {
            w + 1
        } else {
            w
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub scan_id: String,
    pub verdict: Verdict,
    pub defects: Vec<DefectKind>,
    pub stats: BTreeMap<String, f64>,
}

/// Screens a trace. See [`screen_quality_with_repair`].
pub fn screen_quality(
    trace: &RespiratoryTrace,
    thresholds: &QcThresholds,
) -> Result<QualityReport> {
    screen_quality_with_repair(trace, thresholds).map(|(r, _)| r)
}

/// Screens a trace and also returns the despiked trace the verdict is based
/// on (the input itself for flatline traces).
pub fn screen_quality_with_repair(
    trace: &RespiratoryTrace,
    thr: &QcThresholds,
) -> Result<(QualityReport, RespiratoryTrace)> {
    trace.validate()?;
    let x = &trace.samples;
    let mut st = BTreeMap::new();

    let (lo, hi) = min_max(x);
    let range = hi - lo;
    let std = stats::pop_std(x);
    st.insert("dynamic_range".to_string(), range);
    st.insert("std".to_string(), std);
    let flat_ratio = if range > 0.0 { std / range } else { 0.0 };
    st.insert("flatline_ratio".to_string(), flat_ratio);
    if range == 0.0 || std < thr.flatline_eps * range {
        let report = QualityReport {
            scan_id: trace.scan_id.clone(),
            verdict: Verdict::Unusable,
            defects: vec![DefectKind::Flatline],
            stats: st,
        };
        return Ok((report, trace.clone()));
    }

    let window = thr.despike_window_samples(trace.sample_rate_hz);
    let (repaired, mask) = despike_with_mask(trace, window, thr.despike_sigmas)?;
    let y = &repaired.samples;
    let spike_count = mask.iter().filter(|&&m| m).count();
    let density = max_window_density(&mask, window);
    st.insert("spike_count".to_string(), spike_count as f64);
    st.insert("max_spike_density".to_string(), density);

    let mut other = Vec::new();

    let (rlo, rhi) = min_max(y);
    let repaired_range = rhi - rlo;
    let win = ((thr.narrow_window_s * trace.sample_rate_hz).round() as usize).max(2);
    let typical = typical_window_range(y, win);
    let range_ratio = if repaired_range > 0.0 {
        typical / repaired_range
    } else {
        0.0
    };
    st.insert("typical_range".to_string(), typical);
    st.insert("range_ratio".to_string(), range_ratio);
    if range_ratio < thr.narrow_range_frac {
        other.push(DefectKind::NarrowRange);
    }

    let (run_len, run_start) = longest_constant_run(y);
    let run_frac = run_len as f64 / y.len() as f64;
    st.insert("longest_constant_run".to_string(), run_len as f64);
    st.insert("longest_constant_run_frac".to_string(), run_frac);
    if run_frac > thr.partial_frac {
        other.push(DefectKind::PartialRecording);
    }

    let repeated = repeated_fraction(y, run_start, run_len);
    st.insert("repeated_fraction".to_string(), repeated);
    if repeated > thr.repeated_frac {
        other.push(DefectKind::SamplingAnomaly);
    }

    let cc = connection_change_score(y);
    st.insert("connection_change_score".to_string(), cc);
    if cc > thr.connection_change_sigmas {
        other.push(DefectKind::ConnectionChange);
    }

    let residual = residual_outliers(y, thr.residual_outlier_sigmas);
    st.insert("residual_outliers".to_string(), residual as f64);

    let mut defects = other.clone();
    let dense = density > thr.max_spike_density;
    if residual > 0 || dense || (spike_count > 0 && !other.is_empty()) {
        defects.push(DefectKind::UnremovableSpikes);
    } else if spike_count > 0 {
        defects.push(DefectKind::RemovableSpikes);
    }
    defects.sort();
    let verdict = match defects.as_slice() {
        [] => Verdict::Usable,
        [DefectKind::RemovableSpikes] => Verdict::UsableAfterRepair,
        _ => Verdict::Unusable,
    };
    let report = QualityReport {
        scan_id: trace.scan_id.clone(),
        verdict,
        defects,
        stats: st,
    };
    Ok((report, repaired))
}

/// Largest fraction of flagged samples in any run of `win` samples.
fn max_window_density(mask: &[bool], win: usize) -> f64 {
    let win = win.min(mask.len()).max(1);
    let mut count = mask[..win].iter().filter(|&&m| m).count();
    let mut best = count;
    for i in win..mask.len() {
        count += mask[i] as usize;
        count -= mask[i - win] as usize;
        best = best.max(count);
    }
    best as f64 / win as f64
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Median of max-min over consecutive windows of `win` samples. A trailing
/// partial window counts if it is at least half a window long.
fn typical_window_range(x: &[f64], win: usize) -> f64 {
    if x.len() <= win {
        let (lo, hi) = min_max(x);
        return hi - lo;
    }
    let mut ranges: Vec<f64> = x
        .chunks(win)
        .filter(|c| c.len() * 2 >= win)
        .map(|c| {
            let (lo, hi) = min_max(c);
            hi - lo
        })
        .collect();
    stats::median_in_place(&mut ranges)
}

/// Longest run of identical consecutive samples: (length, start).
fn longest_constant_run(x: &[f64]) -> (usize, usize) {
    let (mut best, mut best_start) = (1, 0);
    let (mut cur, mut cur_start) = (1, 0);
    for i in 1..x.len() {
        if x[i] == x[i - 1] {
            cur += 1;
        } else {
            cur = 1;
            cur_start = i;
        }
        if cur > best {
            best = cur;
            best_start = cur_start;
        }
    }
    (best, best_start)
}

/// Fraction of consecutive pairs with equal values, ignoring pairs inside
/// the longest constant run (that one is the partial-recording check).
fn repeated_fraction(x: &[f64], run_start: usize, run_len: usize) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let run_pairs = run_len.saturating_sub(1);
    let in_run = |i: usize| i > run_start && i < run_start + run_len;
    let repeats = (1..x.len())
        .filter(|&i| x[i] == x[i - 1] && !in_run(i))
        .count();
    let pairs = x.len() - 1 - run_pairs;
    if pairs == 0 {
        0.0
    } else {
        repeats as f64 / pairs as f64
    }
}

const CC_MAX_POINTS: usize = 4096;
const CC_SPLITS: usize = 49;
const CC_SATURATED: f64 = 1e12;

/// Largest two-segment median shift in pooled robust sigmas, over split
/// points between 10% and 90% of a decimated copy of the trace.
fn connection_change_score(x: &[f64]) -> f64 {
    let stride = x.len().div_ceil(CC_MAX_POINTS).max(1);
    let d: Vec<f64> = x.iter().step_by(stride).copied().collect();
    if d.len() < 10 {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for s in 0..CC_SPLITS {
        let frac = 0.1 + 0.8 * s as f64 / (CC_SPLITS - 1) as f64;
        let cut = ((d.len() as f64 * frac).round() as usize).clamp(1, d.len() - 1);
        let (left, right) = d.split_at(cut);
        let ml = stats::median(left);
        let mr = stats::median(right);
        let mut dev: Vec<f64> = left
            .iter()
            .map(|v| (v - ml).abs())
            .chain(right.iter().map(|v| (v - mr).abs()))
            .collect();
        let scale = 1.4826 * stats::median_in_place(&mut dev);
        let shift = (ml - mr).abs();
        let score = if scale > 0.0 {
            shift / scale
        } else if shift > 0.0 {
            CC_SATURATED
        } else {
            0.0
        };
        best = best.max(score.min(CC_SATURATED));
    }
    best
}

fn residual_outliers(x: &[f64], n_sigmas: f64) -> usize {
    let m = stats::median(x);
    let s = 1.4826 * stats::mad(x, m);
    if s == 0.0 {
        return 0;
    }
    x.iter().filter(|v| (*v - m).abs() > n_sigmas * s).count()
}
