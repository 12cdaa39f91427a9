use anyhow::Context as _;
use rvrecon::synth::generate_corpus;

use crate::error::{CliError, CliResult};
use crate::files::{write_atomic, write_manifest, ManifestEntry};
use crate::Context;

/// Writes `<scan>.trace.txt`, `<scan>.roi.txt` and `<scan>.events.jsonl` per
/// scan, then `manifest.tsv` and the resolved configuration.
pub fn run(ctx: &Context, n_scans: Option<usize>) -> CliResult<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(n) = n_scans {
        cfg.synth.n_scans = n;
    }
    let corpus = generate_corpus(&cfg.corpus_config()).map_err(CliError::io)?;
    let dir = ctx.out_dir();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::Io)?;
    let mut rows = Vec::with_capacity(corpus.len());
    for s in &corpus {
        let row = ManifestEntry {
            scan_id: s.scan_id.clone(),
            subject_id: s.subject_id.clone(),
            trace: format!("{}.trace.txt", s.scan_id).into(),
            roi: format!("{}.roi.txt", s.scan_id).into(),
            events: Some(format!("{}.events.jsonl", s.scan_id).into()),
        };
        write_atomic(&dir.join(&row.trace), |w| {
            Ok(s.trace.trace.write_text(w)?)
        })
        .map_err(CliError::Io)?;
        write_atomic(&dir.join(&row.roi), |w| Ok(s.roi.write_text(w)?)).map_err(CliError::Io)?;
        write_atomic(&dir.join(row.events.as_ref().expect("set above")), |w| {
            for e in &s.trace.events {
                serde_json::to_writer(&mut *w, e)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
        .map_err(CliError::Io)?;
        rows.push(row);
    }
    write_atomic(&dir.join("resolved_config.toml"), |w| {
        Ok(w.write_all(cfg.to_toml().as_bytes())?)
    })
    .map_err(CliError::Io)?;
    write_atomic(&dir.join("manifest.tsv"), |w| write_manifest(w, &rows)).map_err(CliError::Io)?;
    Ok(())
}
