use std::path::Path;

use anyhow::{anyhow, Context as _};
use rvrecon::physio::{extract_target, screen_quality_with_repair, RespiratoryTrace, Verdict};
use rvrecon::Measure;

use crate::error::{CliError, CliResult};
use crate::files::write_output;
use crate::Context;

pub fn run(
    ctx: &Context,
    path: &Path,
    measure: Option<Measure>,
    tr: Option<f64>,
    volumes: Option<usize>,
    force: bool,
) -> CliResult<()> {
    let trace = RespiratoryTrace::from_path(path)
        .with_context(|| format!("reading trace {}", path.display()))
        .map_err(CliError::Io)?;
    let measure = measure.unwrap_or(ctx.cfg.run.measure);
    let tr = tr.unwrap_or(ctx.cfg.run.tr_seconds);
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(CliError::io(anyhow!("--tr must be positive")));
    }
    let (report, repaired) =
        screen_quality_with_repair(&trace, &ctx.cfg.qc).map_err(CliError::mismatch)?;
    if report.verdict == Verdict::Unusable && !force {
        let defects: Vec<&str> = report.defects.iter().map(|d| d.name()).collect();
        return Err(CliError::QcBlocked(format!(
            "{} failed QC ({}); rerun with --force to extract anyway",
            path.display(),
            defects.join(", ")
        )));
    }
    let available = ((trace.duration_s() - trace.start_offset_s) / tr)
        .floor()
        .max(0.0) as usize;
    let n = volumes.unwrap_or(available);
    let target = extract_target(&repaired, measure, tr, n)
        .with_context(|| format!("extracting {} from {}", measure.as_str(), path.display()))
        .map_err(CliError::Mismatch)?;
    write_output(ctx.out.as_deref(), |w| Ok(target.write_text(w)?)).map_err(CliError::Io)
}
