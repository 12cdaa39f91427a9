//! Hampel-style spike repair.
//!
//! A sample is a spike when it deviates from its centred rolling median by
//! more than `n_sigmas * 1.4826 * MAD` of the same window. Windows shrink at
//! the trace edges. A zero local MAD falls back to the global MAD; if that is
//! also zero nothing is flagged. Passes repeat until nothing changes, so the
//! output is a fixed point of the filter.

use super::{PhysioError, RespiratoryTrace, Result};
use crate::stats;

const MAD_SCALE: f64 = 1.4826;
const MAX_PASSES: usize = 32;

/// Repairs spikes; returns the repaired trace and the number of distinct
/// samples that were replaced.
pub fn despike(
    trace: &RespiratoryTrace,
    window_samples: usize,
    n_sigmas: f64,
) -> Result<(RespiratoryTrace, usize)> {
    let (out, mask) = despike_with_mask(trace, window_samples, n_sigmas)?;
    Ok((out, mask.iter().filter(|&&m| m).count()))
}

/// Like [`despike`] but reports which samples were replaced.
pub fn despike_with_mask(
    trace: &RespiratoryTrace,
    window_samples: usize,
    n_sigmas: f64,
) -> Result<(RespiratoryTrace, Vec<bool>)> {
    trace.validate()?;
    if window_samples < 3 || window_samples.is_multiple_of(2) {
        return Err(PhysioError::InvalidWindow(format!(
            "despike window must be odd and >= 3, got {window_samples}"
        )));
    }
    if !(n_sigmas > 0.0) {
        return Err(PhysioError::InvalidParameter(format!(
            "n_sigmas must be positive, got {n_sigmas}"
        )));
    }
    let half = window_samples / 2;
    let mut current = trace.samples.clone();
    let mut mask = vec![false; current.len()];
    for _ in 0..MAX_PASSES {
        let changed = hampel_pass(&mut current, half, n_sigmas, &mut mask);
        if changed == 0 {
            break;
        }
    }
    Ok((trace.with_samples(current), mask))
}

/// One filter pass. Medians come from the pass input; replacements are
/// written into `x` afterwards. Returns how many samples changed.
fn hampel_pass(x: &mut [f64], half: usize, n_sigmas: f64, mask: &mut [bool]) -> usize {
    let n = x.len();
    let global_mad = {
        let m = stats::median(x);
        stats::mad(x, m)
    };
    let mut window = SortedWindow::with_capacity(2 * half + 1);
    for &v in &x[..(half + 1).min(n)] {
        window.insert(v);
    }
    let mut replacements = Vec::new();
    for i in 0..n {
        if i > 0 {
            if i + half < n {
                window.insert(x[i + half]);
            }
            if i > half {
                window.remove(x[i - half - 1]);
            }
        }
        let med = window.median();
        let dev = (x[i] - med).abs();
        if dev == 0.0 {
            continue;
        }
        let mut scale = window.mad(med);
        if scale == 0.0 {
            scale = global_mad;
        }
        if scale == 0.0 {
            continue;
        }
        if dev > n_sigmas * MAD_SCALE * scale {
            replacements.push((i, med));
        }
    }
    let mut changed = 0;
    for (i, med) in replacements {
        if x[i] != med {
            x[i] = med;
            mask[i] = true;
            changed += 1;
        }
    }
    changed
}

/// A sorted multiset of window values.
struct SortedWindow {
    vals: Vec<f64>,
}

impl SortedWindow {
    fn with_capacity(cap: usize) -> Self {
        Self {
            vals: Vec::with_capacity(cap),
        }
    }

    fn insert(&mut self, v: f64) {
        let pos = self.vals.partition_point(|&u| u < v);
        self.vals.insert(pos, v);
    }

    fn remove(&mut self, v: f64) {
        let pos = self.vals.partition_point(|&u| u < v);
        debug_assert!(self.vals[pos] == v);
        self.vals.remove(pos);
    }

    fn median(&self) -> f64 {
        let n = self.vals.len();
        if n % 2 == 1 {
            self.vals[n / 2]
        } else {
            0.5 * (self.vals[n / 2 - 1] + self.vals[n / 2])
        }
    }

    /// Median of |v - center| by merging the two monotone distance runs
    /// that fan out from `center`.
    fn mad(&self, center: f64) -> f64 {
        let v = &self.vals;
        let n = v.len();
        let split = v.partition_point(|&u| u <= center);
        let (mut lo, mut hi) = (split, split); // lo: next is lo-1, hi: next is hi
        let target = n / 2;
        let mut prev = 0.0;
        for k in 0..=target {
            let dl = if lo > 0 {
                center - v[lo - 1]
            } else {
                f64::INFINITY
            };
            let dh = if hi < n {
                v[hi] - center
            } else {
                f64::INFINITY
            };
            let d = if dl <= dh {
                lo -= 1;
                dl
            } else {
                hi += 1;
                dh
            };
            if k == target {
                return if n % 2 == 1 { d } else { 0.5 * (prev + d) };
            }
            prev = d;
        }
        unreachable!()
    }
}
