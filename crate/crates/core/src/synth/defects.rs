use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng, Result, SynthError};
use crate::physio::{DefectKind, RespiratoryTrace};
use crate::stats;

/// Strength of each injected corruption, in units of the clean trace's
/// amplitude (`sqrt(2)` times its standard deviation) where relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectParams {
    pub n_spikes: usize,
    pub spike_gain: f64,
    pub n_bursts: usize,
    pub burst_s: f64,
    /// Fraction of samples inside a burst that are hit.
    pub burst_density: f64,
    pub partial_frac: f64,
    /// Seconds of full-amplitude signal kept before the range collapses.
    pub narrow_lead_s: f64,
    pub narrow_gain: f64,
    pub hold_samples: usize,
    pub step_gain: f64,
}

impl Default for DefectParams {
    fn default() -> Self {
        Self {
            n_spikes: 5,
            spike_gain: 20.0,
            n_bursts: 3,
            burst_s: 0.75,
            burst_density: 0.7,
            partial_frac: 0.4,
            narrow_lead_s: 10.0,
            narrow_gain: 0.015,
            hold_samples: 8,
            step_gain: 8.0,
        }
    }
}

/// Applies one labelled corruption to a clean trace.
pub fn inject_defects(
    trace: &RespiratoryTrace,
    defect: DefectKind,
    p: &DefectParams,
    seed: u64,
) -> Result<RespiratoryTrace> {
    trace.validate()?;
    let mut x = trace.samples.clone();
    let n = x.len();
    let fs = trace.sample_rate_hz;
    let amp = stats::pop_std(&x) * std::f64::consts::SQRT_2;
    let mean = stats::mean(&x);
    let mut r = rng(seed, 30);
    match defect {
        DefectKind::RemovableSpikes => {
            if n < 4 * p.n_spikes.max(1) {
                return Err(SynthError::UnsupportedDefect(
                    "trace too short for spikes".into(),
                ));
            }
            // One spike per equal slice keeps them isolated from each other.
            let slice = n / p.n_spikes.max(1);
            for s in 0..p.n_spikes {
                let i = s * slice + r.gen_range(slice / 4..slice - slice / 4);
                let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                x[i] += sign * p.spike_gain * amp;
            }
        }
        DefectKind::UnremovableSpikes => {
            let len = ((p.burst_s * fs).round() as usize).max(3);
            if n < 2 * len * p.n_bursts.max(1) {
                return Err(SynthError::UnsupportedDefect(
                    "trace too short for bursts".into(),
                ));
            }
            let slice = n / p.n_bursts.max(1);
            for b in 0..p.n_bursts {
                let start = b * slice + r.gen_range(0..slice - len);
                for v in &mut x[start..start + len] {
                    if r.gen_bool(p.burst_density.clamp(0.0, 1.0)) {
                        let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                        *v += sign * r.gen_range(15.0..25.0) * amp;
                    }
                }
            }
        }
        DefectKind::PartialRecording => {
            let keep = ((1.0 - p.partial_frac.clamp(0.0, 1.0)) * n as f64).round() as usize;
            x[keep..].fill(0.0);
        }
        DefectKind::Flatline => x.fill(mean),
        DefectKind::NarrowRange => {
            let lead = ((p.narrow_lead_s * fs).round() as usize).min(n);
            let gain = p.narrow_gain * r.gen_range(0.67..1.33);
            for v in &mut x[lead..] {
                *v = mean + (*v - mean) * gain;
            }
        }
        DefectKind::SamplingAnomaly => {
            let h = p.hold_samples.max(2);
            for c in x.chunks_mut(h) {
                let first = c[0];
                c.fill(first);
            }
        }
        DefectKind::ConnectionChange => {
            let at = (r.gen_range(0.3..0.7) * n as f64) as usize;
            let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            for v in &mut x[at..] {
                *v += sign * p.step_gain * amp;
            }
        }
    }
    Ok(trace.with_samples(x))
}
