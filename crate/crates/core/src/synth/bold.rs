use std::f64::consts::TAU;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{rng, Result, SynthError};
use crate::dataset::RoiTimeseries;
use crate::physio::TargetSeries;

/// BOLD model: ROI `r` is `roi_weights[r] * (kernel * target)` plus a slow
/// sinusoidal drift and white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoldSynthModel {
    /// Impulse response sampled on the TR grid.
    pub kernel: Vec<f64>,
    /// Index of the zero-lag tap: 0 is causal, `len / 2` is centred.
    pub kernel_origin: usize,
    pub roi_weights: Vec<f64>,
    pub noise_std: f64,
    pub drift_amplitude: f64,
    pub seed: u64,
}

/// `l^3 e^-l` for lags `0..16`, normalised to unit sum (peak at lag 3).
pub fn gamma_kernel() -> Vec<f64> {
    let k: Vec<f64> = (0..16)
        .map(|l| (l as f64).powi(3) * (-(l as f64)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Gaussian with standard deviation `sigma` over `2 * half_width + 1` taps,
/// unit sum; use with `kernel_origin = half_width`.
pub fn symmetric_kernel(sigma: f64, half_width: usize) -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * half_width)
        .map(|i| {
            let d = i as f64 - half_width as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Weights of magnitude in [0.75, 1.25] whose signs alternate by ROI.
pub fn sign_mixed_weights(n_rois: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed, 10);
    (0..n_rois)
        .map(|i| {
            let m = r.gen_range(0.75..1.25);
            if i % 2 == 0 {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// `y[t] = sum_j kernel[j] * x[t - j + origin]`, with `x` held at its end
/// values outside its range.
pub fn convolve(x: &[f64], kernel: &[f64], origin: usize) -> Vec<f64> {
    let n = x.len() as isize;
    (0..n)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, &k)| k * x[(t - j as isize + origin as isize).clamp(0, n - 1) as usize])
                .sum()
        })
        .collect()
}

impl BoldSynthModel {
    pub fn validate(&self, n_rois: usize, n_volumes: usize) -> Result<()> {
        if self.kernel.is_empty() || self.kernel.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::InvalidModel(
                "kernel must be nonempty and finite".into(),
            ));
        }
        if self.kernel_origin >= self.kernel.len() {
            return Err(SynthError::InvalidModel(format!(
                "kernel origin {} outside kernel of length {}",
                self.kernel_origin,
                self.kernel.len()
            )));
        }
        if self.kernel.len() > n_volumes {
            return Err(SynthError::KernelTooLong {
                kernel: self.kernel.len(),
                n_volumes,
            });
        }
        if self.roi_weights.len() != n_rois {
            return Err(SynthError::InvalidModel(format!(
                "{} ROI weights for {n_rois} ROIs",
                self.roi_weights.len()
            )));
        }
        if self.roi_weights.iter().all(|&w| w == 0.0)
            || self.roi_weights.iter().any(|w| !w.is_finite())
        {
            return Err(SynthError::InvalidModel(
                "ROI weights must be finite with one nonzero".into(),
            ));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("drift_amplitude", self.drift_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidModel(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

pub fn gen_bold(
    target: &TargetSeries,
    model: &BoldSynthModel,
    n_rois: usize,
) -> Result<RoiTimeseries> {
    let n = target.values.len();
    model.validate(n_rois, n)?;
    let signal = convolve(&target.values, &model.kernel, model.kernel_origin);
    let mut drift_rng = rng(model.seed, 20);
    let noise = Normal::new(0.0, model.noise_std).expect("validated");
    let mut noise_rng = rng(model.seed, 21);
    let mut data = Array2::<f64>::zeros((n, n_rois));
    for r in 0..n_rois {
        let period_s = drift_rng.gen_range(100.0..300.0);
        let phase = drift_rng.gen_range(0.0..TAU);
        let w = model.roi_weights[r];
        for t in 0..n {
            let time = t as f64 * target.tr_seconds;
            let mut v = w * signal[t];
            if model.drift_amplitude > 0.0 {
                v += model.drift_amplitude * (TAU * time / period_s + phase).sin();
            }
            if model.noise_std > 0.0 {
                v += noise.sample(&mut noise_rng);
            }
            data[[t, r]] = v;
        }
    }
    Ok(RoiTimeseries {
        scan_id: target.scan_id.clone(),
        subject_id: None,
        data,
        tr_seconds: target.tr_seconds,
        roi_names: RoiTimeseries::default_names(n_rois),
    })
}
