use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use rvrecon::par;
use rvrecon::physio::{screen_quality, QualityReport, RespiratoryTrace, Verdict};
use rvrecon::pipeline::write_record;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files::write_output;
use crate::Context;

#[derive(Serialize)]
struct FileReport<'a> {
    path: String,
    #[serde(flatten)]
    report: &'a QualityReport,
}

#[derive(Serialize)]
struct FileError {
    path: String,
    error: String,
}

#[derive(Serialize)]
struct Summary {
    n_files: usize,
    n_screened: usize,
    n_errors: usize,
    n_usable: usize,
    n_usable_after_repair: usize,
    n_unusable: usize,
    /// Usable (including after repair) over screened files.
    usable_fraction: f64,
    defects: BTreeMap<String, usize>,
}

fn screen(path: &Path, ctx: &Context) -> Result<QualityReport, String> {
    let trace = RespiratoryTrace::from_path(path).map_err(|e| e.to_string())?;
    screen_quality(&trace, &ctx.cfg.qc).map_err(|e| e.to_string())
}

/// One `quality` or `qc_error` record per file, then a `qc_summary`. Every
/// file is attempted; exits 2 afterwards if any could not be read.
pub fn run(ctx: &Context, traces: &[PathBuf]) -> CliResult<()> {
    if traces.is_empty() {
        return Err(CliError::io(anyhow!("no trace files given")));
    }
    let results = par::map(traces, |p| screen(p, ctx));
    let mut summary = Summary {
        n_files: traces.len(),
        n_screened: 0,
        n_errors: 0,
        n_usable: 0,
        n_usable_after_repair: 0,
        n_unusable: 0,
        usable_fraction: 0.0,
        defects: BTreeMap::new(),
    };
    write_output(ctx.out.as_deref(), |w| {
        for (path, r) in traces.iter().zip(&results) {
            let path = path.display().to_string();
            match r {
                Ok(report) => {
                    summary.n_screened += 1;
                    match report.verdict {
                        Verdict::Usable => summary.n_usable += 1,
                        Verdict::UsableAfterRepair => summary.n_usable_after_repair += 1,
                        Verdict::Unusable => summary.n_unusable += 1,
                    }
                    for d in &report.defects {
                        *summary.defects.entry(d.name().to_string()).or_default() += 1;
                    }
                    write_record(w, "quality", &FileReport { path, report })?;
                }
                Err(error) => {
                    summary.n_errors += 1;
                    write_record(
                        w,
                        "qc_error",
                        &FileError {
                            path,
                            error: error.clone(),
                        },
                    )?;
                }
            }
        }
        if summary.n_screened > 0 {
            summary.usable_fraction = (summary.n_usable + summary.n_usable_after_repair) as f64
                / summary.n_screened as f64;
        }
        write_record(w, "qc_summary", &summary)?;
        Ok(())
    })
    .map_err(CliError::Io)?;
    let n_errors = results.iter().filter(|r| r.is_err()).count();
    if n_errors > 0 {
        return Err(CliError::io(anyhow!(
            "{n_errors} of {} trace files could not be read",
            traces.len()
        )));
    }
    Ok(())
}
