//! Inspiration / expiration peak detection.
//!
//! Candidate extrema are plateau-aware local maxima (minima on the negated
//! trace), filtered by topographic prominence and then by minimum spacing,
//! tallest first. The two lists are finally merged so that they alternate,
//! keeping the more extreme of any two same-kind neighbours.

use std::collections::BTreeSet;

use super::{PhysioError, RespiratoryTrace, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BreathPeaks {
    /// Sample indices of breath tops, strictly increasing.
    pub inspiration_indices: Vec<usize>,
    /// Sample indices of breath bottoms, strictly increasing.
    pub expiration_indices: Vec<usize>,
}

impl BreathPeaks {
    /// The single trough strictly between two consecutive inspiration peaks.
    pub fn trough_between(&self, a: usize, b: usize) -> Option<usize> {
        let pos = self.expiration_indices.partition_point(|&e| e <= a);
        self.expiration_indices.get(pos).copied().filter(|&e| e < b)
    }

    /// True when exactly one trough separates every pair of consecutive
    /// inspiration peaks and both lists are strictly increasing.
    pub fn is_interleaved(&self) -> bool {
        let inc = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if !inc(&self.inspiration_indices) || !inc(&self.expiration_indices) {
            return false;
        }
        self.inspiration_indices.windows(2).all(|w| {
            let lo = self.expiration_indices.partition_point(|&e| e <= w[0]);
            let hi = self.expiration_indices.partition_point(|&e| e < w[1]);
            hi - lo == 1
        })
    }
}

pub fn detect_breath_peaks(
    trace: &RespiratoryTrace,
    min_breath_period_s: f64,
    min_prominence_frac: f64,
) -> Result<BreathPeaks> {
    trace.validate()?;
    if !(min_breath_period_s > 0.0) {
        return Err(PhysioError::InvalidParameter(format!(
            "min_breath_period_s must be positive, got {min_breath_period_s}"
        )));
    }
    if !(min_prominence_frac > 0.0 && min_prominence_frac < 1.0) {
        return Err(PhysioError::InvalidParameter(format!(
            "min_prominence_frac must lie in (0, 1), got {min_prominence_frac}"
        )));
    }
    let x = &trace.samples;
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let range = hi - lo;
    if range <= 0.0 {
        return Err(PhysioError::NoBreathsDetected);
    }
    let min_prom = min_prominence_frac * range;
    let min_dist = (min_breath_period_s * trace.sample_rate_hz).ceil() as usize;

    let maxima = filtered_extrema(x, min_prom, min_dist);
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let minima = filtered_extrema(&neg, min_prom, min_dist);

    let peaks = interleave(x, &maxima, &minima);
    if peaks.inspiration_indices.len() < 2 {
        return Err(PhysioError::NoBreathsDetected);
    }
    Ok(peaks)
}

fn filtered_extrema(x: &[f64], min_prom: f64, min_dist: usize) -> Vec<usize> {
    let cands: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&p| prominence(x, p) >= min_prom)
        .collect();
    enforce_distance(x, cands, min_dist)
}

/// Local maxima excluding the endpoints. Flat tops report their middle
/// sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Height above the higher of the two bases, each base being the lowest
/// point before reaching a strictly higher sample (or the trace end).
fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for j in (0..p).rev() {
        if x[j] > h {
            break;
        }
        left_min = left_min.min(x[j]);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

fn enforce_distance(x: &[f64], cands: Vec<usize>, min_dist: usize) -> Vec<usize> {
    if min_dist <= 1 {
        return cands;
    }
    let mut order = cands;
    order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    let mut kept = BTreeSet::new();
    for p in order {
        let before = kept.range(..p).next_back().copied();
        let after = kept.range(p..).next().copied();
        let ok_before = before.is_none_or(|q: usize| p - q >= min_dist);
        let ok_after = after.is_none_or(|q: usize| q - p >= min_dist);
        if ok_before && ok_after {
            kept.insert(p);
        }
    }
    kept.into_iter().collect()
}

fn interleave(x: &[f64], maxima: &[usize], minima: &[usize]) -> BreathPeaks {
    let mut events: Vec<(usize, bool)> = maxima
        .iter()
        .map(|&i| (i, true))
        .chain(minima.iter().map(|&i| (i, false)))
        .collect();
    events.sort();
    let mut seq: Vec<(usize, bool)> = Vec::with_capacity(events.len());
    for (i, is_max) in events {
        match seq.last_mut() {
            Some(last) if last.1 == is_max => {
                let better = if is_max {
                    x[i] > x[last.0]
                } else {
                    x[i] < x[last.0]
                };
                if better {
                    *last = (i, is_max);
                }
            }
            Some(last) if last.0 == i => {}
            _ => seq.push((i, is_max)),
        }
    }
    let mut peaks = BreathPeaks::default();
    for (i, is_max) in seq {
        if is_max {
            peaks.inspiration_indices.push(i);
        } else {
            peaks.expiration_indices.push(i);
        }
    }
    peaks
}
