pub mod extract;
pub mod qc;
pub mod report;
pub mod synth;
pub mod train;
pub mod windows;

use anyhow::{anyhow, Context as _};
use rvrecon::dataset::RoiTimeseries;
use rvrecon::par;
use rvrecon::physio::{
    extract_target, screen_quality_with_repair, DefectKind, RespiratoryTrace, Verdict,
};
use rvrecon::pipeline::ScanInput;
use rvrecon::{Measure, QcThresholds};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files::ManifestEntry;

/// A manifest scan left out because its trace failed QC.
#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub scan_id: String,
    pub defects: Vec<DefectKind>,
}

/// Reads, checks and QC-screens every manifest scan, extracting `measure` on
/// each ROI matrix's own volume grid. Unusable traces are skipped; repaired
/// traces are used when spikes were removed.
pub fn load_scans(
    entries: &[ManifestEntry],
    measure: Measure,
    qc: &QcThresholds,
) -> CliResult<(Vec<ScanInput>, Vec<Skipped>)> {
    let loaded = par::map(entries, |e| load_one(e, measure, qc));
    let mut scans = Vec::new();
    let mut skipped = Vec::new();
    for r in loaded {
        match r? {
            Ok(s) => scans.push(s),
            Err(s) => skipped.push(s),
        }
    }
    Ok((scans, skipped))
}

fn load_one(
    e: &ManifestEntry,
    measure: Measure,
    qc: &QcThresholds,
) -> CliResult<Result<ScanInput, Skipped>> {
    let roi = RoiTimeseries::from_path(&e.roi)
        .with_context(|| format!("reading ROI file {}", e.roi.display()))
        .map_err(CliError::Io)?;
    let trace = RespiratoryTrace::from_path(&e.trace)
        .with_context(|| format!("reading trace {}", e.trace.display()))
        .map_err(CliError::Io)?;
    for (what, id) in [("ROI file", &roi.scan_id), ("trace", &trace.scan_id)] {
        if !id.is_empty() && *id != e.scan_id {
            return Err(CliError::mismatch(anyhow!(
                "manifest scan `{}` points at a {what} for scan `{id}`",
                e.scan_id
            )));
        }
    }
    if let Some(sub) = &roi.subject_id {
        if *sub != e.subject_id {
            return Err(CliError::mismatch(anyhow!(
                "scan `{}`: manifest subject `{}` but ROI file says `{sub}`",
                e.scan_id,
                e.subject_id
            )));
        }
    }
    // The volumes occupy trace time [offset, offset + n * TR].
    let needed = trace.start_offset_s + roi.n_volumes() as f64 * roi.tr_seconds;
    let have = trace.duration_s();
    // Half a sample of slack for rounding in the header values.
    if have + 0.5 / trace.sample_rate_hz < needed {
        return Err(CliError::mismatch(anyhow!(
            "scan `{}`: trace covers {have:.1} s but {} volumes at TR {} s need {needed:.1} s",
            e.scan_id,
            roi.n_volumes(),
            roi.tr_seconds
        )));
    }
    let (report, repaired) = screen_quality_with_repair(&trace, qc)
        .with_context(|| format!("screening {}", e.trace.display()))
        .map_err(CliError::Mismatch)?;
    if report.verdict == Verdict::Unusable {
        return Ok(Err(Skipped {
            scan_id: e.scan_id.clone(),
            defects: report.defects,
        }));
    }
    let mut target = extract_target(&repaired, measure, roi.tr_seconds, roi.n_volumes())
        .with_context(|| format!("extracting {} for `{}`", measure.as_str(), e.scan_id))
        .map_err(CliError::Mismatch)?;
    target.scan_id = e.scan_id.clone();
    Ok(Ok(ScanInput {
        scan_id: e.scan_id.clone(),
        subject_id: e.subject_id.clone(),
        roi,
        target,
    }))
}
