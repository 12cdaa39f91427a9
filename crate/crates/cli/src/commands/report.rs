use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context as _};
use rvrecon::dataset::FoldPlan;
use rvrecon::metrics::{summarize_all, summarize_folds, FoldSummary, METRIC_NAMES};
use rvrecon::pipeline::{write_record, FoldMetric};
use rvrecon::MetricReport;

use crate::error::{CliError, CliResult};
use crate::files::write_output;
use crate::Context;

/// Collects the `metric` records of a JSON-lines stream. Other record kinds
/// are skipped; anything that is not a JSON object with a string `record`
/// field is an error.
pub fn read_metrics(reader: impl BufRead) -> anyhow::Result<Vec<FoldMetric>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("line {}: not JSON", i + 1))?;
        let kind = v
            .get("record")
            .and_then(|k| k.as_str())
            .ok_or_else(|| anyhow!("line {}: missing `record` field", i + 1))?;
        if kind == "metric" {
            let m: FoldMetric = serde_json::from_value(v)
                .with_context(|| format!("line {}: malformed metric record", i + 1))?;
            out.push(m);
        }
    }
    Ok(out)
}

fn summaries(metrics: &[FoldMetric]) -> anyhow::Result<Vec<FoldSummary>> {
    let mut assignments = BTreeMap::new();
    for m in metrics {
        if let Some(prev) = assignments.insert(m.report.scan_id.clone(), m.fold) {
            if prev != m.fold {
                bail!(
                    "scan `{}` appears in folds {prev} and {}",
                    m.report.scan_id,
                    m.fold
                );
            }
        }
    }
    let k = metrics.iter().map(|m| m.fold + 1).max().unwrap_or(0);
    let plan = FoldPlan {
        k,
        seed: 0,
        assignments,
    };
    let reports: Vec<MetricReport> = metrics.iter().map(|m| m.report.clone()).collect();
    // Folds without any scan in the stream (e.g. from a single `eval`) are dropped.
    let mut out: Vec<FoldSummary> = summarize_folds(&reports, &plan)?
        .into_iter()
        .filter(|s| s.n_scans > 0)
        .collect();
    out.push(summarize_all(&reports));
    Ok(out)
}

const STATS: [&str; 7] = ["n", "excluded", "min", "q1", "median", "q3", "max"];

fn cell(s: &FoldSummary, metric: &str, stat: &str) -> String {
    let m = &s.metrics[metric];
    let five = |f: fn(&rvrecon::metrics::FiveNumber) -> f64| {
        m.summary
            .as_ref()
            .map_or("-".to_string(), |s| format!("{:.4}", f(s)))
    };
    match stat {
        "n" => m.n.to_string(),
        "excluded" => m.excluded.to_string(),
        "min" => five(|f| f.min),
        "q1" => five(|f| f.q1),
        "median" => five(|f| f.median),
        "q3" => five(|f| f.q3),
        _ => five(|f| f.max),
    }
}

/// Rows are (fold, statistic), columns are metrics; `all` pools every fold.
fn write_table(w: &mut dyn Write, sums: &[FoldSummary]) -> anyhow::Result<()> {
    write!(w, "{:<6}{:<10}", "fold", "stat")?;
    for m in METRIC_NAMES {
        write!(w, "{m:>12}")?;
    }
    writeln!(w)?;
    for s in sums {
        let fold = s.fold.map_or("all".to_string(), |f| f.to_string());
        for stat in STATS {
            write!(w, "{fold:<6}{stat:<10}")?;
            for m in METRIC_NAMES {
                write!(w, "{:>12}", cell(s, m, stat))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn run(ctx: &Context, stream: Option<&Path>, json: bool) -> CliResult<()> {
    let metrics = match stream {
        Some(p) => {
            let f = std::fs::File::open(p)
                .with_context(|| format!("opening {}", p.display()))
                .map_err(CliError::Io)?;
            read_metrics(std::io::BufReader::new(f))
        }
        None => read_metrics(std::io::stdin().lock()),
    }
    .map_err(CliError::Io)?;
    if metrics.is_empty() {
        return write_output(ctx.out.as_deref(), |w| Ok(writeln!(w, "no reports")?))
            .map_err(CliError::Io);
    }
    let sums = summaries(&metrics).map_err(CliError::Io)?;
    write_output(ctx.out.as_deref(), |w| {
        if json {
            for s in &sums {
                write_record(w, "fold_summary", s)?;
            }
            Ok(())
        } else {
            write_table(w, &sums)
        }
    })
    .map_err(CliError::Io)
}
