//! RV and RVT on the fMRI volume grid.
//!
//! Volume `k` is stamped at its centre, `start_offset_s + (k + 0.5) * tr`.

use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{BreathPeaks, PhysioError, RespiratoryTrace, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Rv,
    Rvt,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Rv => "rv",
            Measure::Rvt => "rvt",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rv" => Ok(Measure::Rv),
            "rvt" => Ok(Measure::Rvt),
            other => Err(format!("unknown measure `{other}` (expected rv or rvt)")),
        }
    }
}

/// One respiratory value per fMRI volume. Values are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSeries {
    pub scan_id: String,
    pub measure: Measure,
    pub values: Vec<f64>,
    pub tr_seconds: f64,
    pub n_volumes: usize,
}

impl TargetSeries {
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# scan_id={}", self.scan_id)?;
        writeln!(w, "# measure={}", self.measure.as_str())?;
        writeln!(w, "# tr_seconds={}", self.tr_seconds)?;
        writeln!(w, "# n_volumes={}", self.n_volumes)?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut scan_id = String::new();
        let mut measure = None;
        let mut tr = None;
        let mut values = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            let perr = |msg: String| PhysioError::Parse { line: i + 1, msg };
            if t.is_empty() {
                continue;
            }
            if let Some(h) = t.strip_prefix('#') {
                if let Some((k, v)) = h.split_once('=') {
                    match k.trim() {
                        "scan_id" => scan_id = v.trim().to_string(),
                        "measure" => measure = Some(v.trim().parse().map_err(perr)?),
                        "tr_seconds" => {
                            tr = Some(v.trim().parse::<f64>().map_err(|e| perr(e.to_string()))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let mut cols = t.split_whitespace();
            let idx: usize = cols
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|e| perr(format!("bad index: {e}")))?;
            if idx != values.len() {
                return Err(perr(format!("expected index {}, got {idx}", values.len())));
            }
            let v: f64 = cols
                .next()
                .ok_or_else(|| perr("missing value column".into()))?
                .parse()
                .map_err(|e| perr(format!("bad value: {e}")))?;
            values.push(v);
        }
        Ok(Self {
            scan_id,
            measure: measure.ok_or(PhysioError::MissingMetadata("measure"))?,
            tr_seconds: tr.ok_or(PhysioError::MissingMetadata("tr_seconds"))?,
            n_volumes: values.len(),
            values,
        })
    }
}

/// Trace time of the centre of volume `k`.
pub fn volume_time(start_offset_s: f64, tr_seconds: f64, k: usize) -> f64 {
    start_offset_s + (k as f64 + 0.5) * tr_seconds
}

/// Sample range of the RV window for volume `k`: `round(window * fs)` samples
/// centred on the volume time, truncated at the trace edges.
pub fn rv_window(
    trace: &RespiratoryTrace,
    window_seconds: f64,
    tr_seconds: f64,
    k: usize,
) -> Range<usize> {
    let fs = trace.sample_rate_hz;
    let width = (window_seconds * fs).round().max(1.0);
    let centre = volume_time(trace.start_offset_s, tr_seconds, k) * fs;
    let start = (centre - width / 2.0).round();
    let end = start + width;
    let n = trace.samples.len() as f64;
    let s = start.clamp(0.0, n) as usize;
    let e = end.clamp(0.0, n) as usize;
    s..e
}

fn check_grid(tr_seconds: f64, n_volumes: usize) -> Result<()> {
    if !(tr_seconds > 0.0) || !tr_seconds.is_finite() {
        return Err(PhysioError::InvalidParameter(format!(
            "tr_seconds must be positive, got {tr_seconds}"
        )));
    }
    if n_volumes == 0 {
        return Err(PhysioError::InvalidParameter(
            "n_volumes must be positive".into(),
        ));
    }
    Ok(())
}

/// RV: population standard deviation of the belt signal in a window centred
/// on each volume.
pub fn compute_rv(
    trace: &RespiratoryTrace,
    window_seconds: f64,
    tr_seconds: f64,
    n_volumes: usize,
) -> Result<TargetSeries> {
    if !(window_seconds > 0.0) || !window_seconds.is_finite() {
        return Err(PhysioError::InvalidWindow(format!(
            "RV window must be positive, got {window_seconds}"
        )));
    }
    check_grid(tr_seconds, n_volumes)?;
    trace.require_extractable()?;
    let needed = trace.start_offset_s + n_volumes as f64 * tr_seconds;
    // One sample of slack for rounding of the final boundary.
    if needed * trace.sample_rate_hz > trace.samples.len() as f64 + 1.0 {
        return Err(PhysioError::TraceTooShort {
            needed_s: needed,
            have_s: trace.duration_s(),
        });
    }

    // Prefix sums of the mean-removed signal keep cancellation small.
    let x = &trace.samples;
    let mu = x.iter().sum::<f64>() / x.len() as f64;
    let mut p1 = Vec::with_capacity(x.len() + 1);
    let mut p2 = Vec::with_capacity(x.len() + 1);
    let (mut s1, mut s2) = (0.0, 0.0);
    p1.push(0.0);
    p2.push(0.0);
    for &v in x {
        let c = v - mu;
        s1 += c;
        s2 += c * c;
        p1.push(s1);
        p2.push(s2);
    }

    let values = (0..n_volumes)
        .map(|k| {
            let r = rv_window(trace, window_seconds, tr_seconds, k);
            let cnt = r.len();
            if cnt == 0 {
                return 0.0;
            }
            let n = cnt as f64;
            let a = (p1[r.end] - p1[r.start]) / n;
            let b = (p2[r.end] - p2[r.start]) / n;
            (b - a * a).max(0.0).sqrt()
        })
        .collect();
    Ok(TargetSeries {
        scan_id: trace.scan_id.clone(),
        measure: Measure::Rv,
        values,
        tr_seconds,
        n_volumes,
    })
}

/// RVT: breath-wise (inspiration height - enclosed trough) / inter-breath
/// time, stamped at the first inspiration peak of each pair, linearly
/// interpolated onto volume centres and held constant beyond the ends.
pub fn compute_rvt(
    trace: &RespiratoryTrace,
    peaks: &BreathPeaks,
    tr_seconds: f64,
    n_volumes: usize,
) -> Result<TargetSeries> {
    check_grid(tr_seconds, n_volumes)?;
    trace.validate()?;
    let insp = &peaks.inspiration_indices;
    if insp.len() < 2 {
        return Err(PhysioError::NoBreathsDetected);
    }
    let fs = trace.sample_rate_hz;
    let x = &trace.samples;
    let mut times = Vec::with_capacity(insp.len() - 1);
    let mut raw = Vec::with_capacity(insp.len() - 1);
    for w in insp.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            return Err(PhysioError::NonPositiveBreathInterval(a));
        }
        if a >= x.len() || b >= x.len() {
            return Err(PhysioError::InvalidParameter(format!(
                "peak index {b} outside trace of {} samples",
                x.len()
            )));
        }
        let trough = peaks.trough_between(a, b).ok_or_else(|| {
            PhysioError::InvalidParameter(format!(
                "no expiration trough between samples {a} and {b}"
            ))
        })?;
        let dt = (b - a) as f64 / fs;
        times.push(a as f64 / fs);
        raw.push(((x[a] - x[trough]) / dt).max(0.0));
    }
    let values = (0..n_volumes)
        .map(|k| {
            interp_hold(
                &times,
                &raw,
                volume_time(trace.start_offset_s, tr_seconds, k),
            )
        })
        .collect();
    Ok(TargetSeries {
        scan_id: trace.scan_id.clone(),
        measure: Measure::Rvt,
        values,
        tr_seconds,
        n_volumes,
    })
}

/// Piecewise-linear interpolation through (xs, ys), constant outside.
fn interp_hold(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let n = xs.len();
    if t <= xs[0] {
        return ys[0];
    }
    if t >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&x| x <= t);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let (y0, y1) = (ys[j - 1], ys[j]);
    y0 + (y1 - y0) * (t - x0) / (x1 - x0)
}
