use std::path::Path;

use rvrecon::dataset::build_windows;

use super::load_scans;
use crate::error::{CliError, CliResult};
use crate::files::{read_manifest, write_output};
use crate::Context;

/// Tab-separated example counts per scan, with skipped scans as comments.
pub fn run(ctx: &Context, manifest: &Path) -> CliResult<()> {
    let entries = read_manifest(manifest).map_err(CliError::Io)?;
    let (scans, skipped) = load_scans(&entries, ctx.cfg.run.measure, &ctx.cfg.qc)?;
    let (w, align) = (ctx.cfg.run.window_size, ctx.cfg.run.alignment);
    let mut rows = Vec::with_capacity(scans.len());
    for s in &scans {
        let ds = build_windows(&s.roi, &s.target, w, align).map_err(CliError::mismatch)?;
        let idx = ds.target_volume_indices();
        rows.push((s, ds.len(), idx.first().copied(), idx.last().copied()));
    }
    write_output(ctx.out.as_deref(), |out| {
        writeln!(out, "# window_size={w} alignment={}", align.as_str())?;
        writeln!(
            out,
            "scan_id\tsubject_id\tn_volumes\tn_rois\tn_examples\tfirst_target\tlast_target"
        )?;
        let mut total = 0;
        for (s, n, first, last) in &rows {
            total += n;
            let fmt = |v: &Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{n}\t{}\t{}",
                s.scan_id,
                s.subject_id,
                s.roi.n_volumes(),
                s.roi.n_rois(),
                fmt(first),
                fmt(last)
            )?;
        }
        for s in &skipped {
            let d: Vec<&str> = s.defects.iter().map(|d| d.name()).collect();
            writeln!(out, "# skipped {} ({})", s.scan_id, d.join(", "))?;
        }
        writeln!(out, "# total_examples={total}")?;
        Ok(())
    })
    .map_err(CliError::Io)
}
