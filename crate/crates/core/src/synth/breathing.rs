use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{rng, Result, SynthError};
use crate::physio::RespiratoryTrace;

/// Breathing oscillator whose rate and depth wander as bounded random walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreathingModel {
    pub base_rate_bpm: f64,
    /// Belt amplitude of an ordinary breath.
    pub depth: f64,
    /// Random-walk scale of log-rate, per sqrt(second).
    pub rate_drift: f64,
    /// Random-walk scale of log-depth, per sqrt(second).
    pub depth_drift: f64,
    /// Deep breaths per minute (Poisson).
    pub deep_breath_rate: f64,
    pub deep_breath_gain: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for BreathingModel {
    fn default() -> Self {
        Self {
            base_rate_bpm: 15.0,
            depth: 1.0,
            rate_drift: 0.05,
            depth_drift: 0.08,
            deep_breath_rate: 1.0,
            deep_breath_gain: 2.5,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl BreathingModel {
    pub fn validate(&self) -> Result<()> {
        if !(6.0..=60.0).contains(&self.base_rate_bpm) {
            return Err(SynthError::InvalidModel(format!(
                "base_rate_bpm {} outside [6, 60]",
                self.base_rate_bpm
            )));
        }
        let scales = [
            ("depth", self.depth),
            ("rate_drift", self.rate_drift),
            ("depth_drift", self.depth_drift),
            ("deep_breath_rate", self.deep_breath_rate),
            ("deep_breath_gain", self.deep_breath_gain),
            ("noise_std", self.noise_std),
        ];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidModel(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One deep breath: the whole cycle between `start_s` and `end_s` had its
/// depth multiplied by `gain`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepBreath {
    pub start_s: f64,
    pub end_s: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrace {
    pub trace: RespiratoryTrace,
    pub events: Vec<DeepBreath>,
}

/// Log-rate and log-depth walks live on this coarse grid.
const WALK_HZ: f64 = 10.0;
/// Walks are reflected to stay within these log-ratio bounds.
const LOG_RATE_BOUND: f64 = 0.4;
const LOG_DEPTH_BOUND: f64 = 0.7;

fn reflecting_walk(n: usize, scale: f64, bound: f64, r: &mut impl Rng) -> Vec<f64> {
    let step = Normal::new(0.0, scale / WALK_HZ.sqrt()).expect("finite scale");
    let mut x = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        x += step.sample(r);
        // Reflect until inside; a single step can overshoot twice at most.
        for _ in 0..4 {
            if x > bound {
                x = 2.0 * bound - x;
            } else if x < -bound {
                x = -2.0 * bound - x;
            }
        }
        x = x.clamp(-bound, bound);
    }
    out
}

fn interp(grid: &[f64], t_s: f64) -> f64 {
    let p = t_s * WALK_HZ;
    let i = p.floor() as usize;
    if i + 1 >= grid.len() {
        return grid[grid.len() - 1];
    }
    let f = p - i as f64;
    grid[i] * (1.0 - f) + grid[i + 1] * f
}

/// Phase-integrated oscillator `depth(t) * sin(phase(t))`. Deep breaths
/// scale one complete cycle, so the waveform stays continuous.
pub fn gen_respiratory(
    model: &BreathingModel,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<SynthTrace> {
    model.validate()?;
    if !(duration_s >= 30.0) || !duration_s.is_finite() {
        return Err(SynthError::InvalidModel(format!(
            "duration must be >= 30 s, got {duration_s}"
        )));
    }
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        return Err(SynthError::InvalidModel(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let n_grid = (duration_s * WALK_HZ).ceil() as usize + 2;
    let log_rate = reflecting_walk(
        n_grid,
        model.rate_drift,
        LOG_RATE_BOUND,
        &mut rng(model.seed, 0),
    );
    let log_depth = reflecting_walk(
        n_grid,
        model.depth_drift,
        LOG_DEPTH_BOUND,
        &mut rng(model.seed, 1),
    );

    let base_hz = model.base_rate_bpm / 60.0;
    let mut phase = Vec::with_capacity(n);
    let mut ph = 0.0f64;
    for i in 0..n {
        phase.push(ph);
        let t = i as f64 / sample_rate_hz;
        ph += TAU * base_hz * interp(&log_rate, t).exp() / sample_rate_hz;
    }
    let cycle = |i: usize| (phase[i] / TAU).floor() as usize;
    let n_cycles = cycle(n - 1) + 1;

    // First sample of every cycle.
    let mut cycle_start = vec![n; n_cycles + 1];
    for i in (0..n).rev() {
        cycle_start[cycle(i)] = i;
    }

    let mut boosted = vec![false; n_cycles];
    let mut events = Vec::new();
    if model.deep_breath_rate > 0.0 && model.deep_breath_gain != 1.0 {
        let gap = Exp::new(model.deep_breath_rate / 60.0).expect("positive rate");
        let mut r = rng(model.seed, 2);
        let mut t = gap.sample(&mut r);
        while t < duration_s {
            let i = ((t * sample_rate_hz) as usize).min(n - 1);
            // The next full cycle after the event time.
            let c = cycle(i) + 1;
            if c + 1 < n_cycles && !boosted[c] {
                boosted[c] = true;
                events.push(DeepBreath {
                    start_s: cycle_start[c] as f64 / sample_rate_hz,
                    end_s: cycle_start[c + 1] as f64 / sample_rate_hz,
                    gain: model.deep_breath_gain,
                });
            }
            t += gap.sample(&mut r);
        }
    }

    let noise = Normal::new(0.0, model.noise_std).expect("finite noise");
    let mut nr = rng(model.seed, 3);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz;
            let gain = if boosted[cycle(i)] {
                model.deep_breath_gain
            } else {
                1.0
            };
            let clean = model.depth * interp(&log_depth, t).exp() * gain * phase[i].sin();
            if model.noise_std > 0.0 {
                clean + noise.sample(&mut nr)
            } else {
                clean
            }
        })
        .collect();
    let trace = RespiratoryTrace::new(format!("synth_{}", model.seed), samples, sample_rate_hz)?;
    Ok(SynthTrace { trace, events })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(rate: f64) -> BreathingModel {
        BreathingModel {
            base_rate_bpm: rate,
            rate_drift: 0.0,
            depth_drift: 0.0,
            deep_breath_rate: 0.0,
            noise_std: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn quiet_model_is_a_sinusoid() {
        let s = gen_respiratory(&quiet(15.0), 60.0, 100.0).unwrap();
        assert!(s.events.is_empty());
        for (i, &v) in s.trace.samples.iter().enumerate() {
            let t = i as f64 / 100.0;
            assert!((v - (TAU * 0.25 * t).sin()).abs() < 1e-9, "sample {i}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = BreathingModel {
            seed: 7,
            deep_breath_rate: 4.0,
            ..Default::default()
        };
        let a = gen_respiratory(&m, 120.0, 50.0).unwrap();
        let b = gen_respiratory(&m, 120.0, 50.0).unwrap();
        assert_eq!(a, b);
        let c = gen_respiratory(&BreathingModel { seed: 8, ..m }, 120.0, 50.0).unwrap();
        assert_ne!(a.trace.samples, c.trace.samples);
    }

    #[test]
    fn walks_stay_bounded() {
        let m = BreathingModel {
            rate_drift: 2.0,
            depth_drift: 2.0,
            deep_breath_rate: 0.0,
            noise_std: 0.0,
            ..Default::default()
        };
        let s = gen_respiratory(&m, 300.0, 20.0).unwrap();
        let peak = s.trace.samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak <= LOG_DEPTH_BOUND.exp() + 1e-12);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(gen_respiratory(&quiet(3.0), 60.0, 10.0).is_err());
        assert!(gen_respiratory(&quiet(15.0), 10.0, 10.0).is_err());
        let m = BreathingModel {
            noise_std: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            gen_respiratory(&m, 60.0, 10.0),
            Err(SynthError::InvalidModel(_))
        ));
    }
}
