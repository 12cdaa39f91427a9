//! Respiratory-belt traces: ingestion, quality screening, spike repair and
//! extraction of RV / RVT on the fMRI volume grid.

mod despike;
mod measures;
mod peaks;
mod quality;
mod trace;

pub use despike::{despike, despike_with_mask};
pub use measures::{compute_rv, compute_rvt, rv_window, volume_time, Measure, TargetSeries};
pub use peaks::{detect_breath_peaks, BreathPeaks};
pub use quality::{
    screen_quality, screen_quality_with_repair, DefectKind, QcThresholds, QualityReport, Verdict,
};
pub use trace::RespiratoryTrace;

/// RV or RVT with the default window, breath spacing and prominence.
pub fn extract_target(
    trace: &RespiratoryTrace,
    measure: Measure,
    tr_seconds: f64,
    n_volumes: usize,
) -> Result<TargetSeries> {
    match measure {
        Measure::Rv => compute_rv(trace, DEFAULT_RV_WINDOW_S, tr_seconds, n_volumes),
        Measure::Rvt => {
            let peaks = detect_breath_peaks(
                trace,
                DEFAULT_MIN_BREATH_PERIOD_S,
                DEFAULT_MIN_PROMINENCE_FRAC,
            )?;
            compute_rvt(trace, &peaks, tr_seconds, n_volumes)
        }
    }
}

use thiserror::Error;

/// Default RV window width in seconds.
pub const DEFAULT_RV_WINDOW_S: f64 = 6.0;
/// Default minimum spacing between inspiration peaks.
pub const DEFAULT_MIN_BREATH_PERIOD_S: f64 = 1.0;
/// Default minimum peak prominence as a fraction of the trace range.
pub const DEFAULT_MIN_PROMINENCE_FRAC: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PhysioError {
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sample rate must be positive, got {0}")]
    InvalidSampleRate(f64),
    #[error("trace too short: need {needed_s:.3} s, have {have_s:.3} s")]
    TraceTooShort { needed_s: f64, have_s: f64 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fewer than two inspiration peaks detected")]
    NoBreathsDetected,
    #[error("non-positive interval between inspiration peaks at sample {0}")]
    NonPositiveBreathInterval(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing required header `{0}`")]
    MissingMetadata(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PhysioError>;
