use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use rvrecon::metrics::summarize_all;
use rvrecon::model::{load_weights, write_weights};
use rvrecon::pipeline::{cross_validate, evaluate_scan, write_record, FoldMetric, TargetScale};
use rvrecon::{AlignmentMode, Measure};
use serde::{Deserialize, Serialize};

use super::load_scans;
use crate::error::{CliError, CliResult};
use crate::files::{read_manifest, write_atomic, write_output};
use crate::Context;

/// Sidecar to a fold's weight file: what `eval` needs to reproduce the
/// fold's inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMeta {
    pub fold: usize,
    pub measure: Measure,
    pub alignment: AlignmentMode,
    pub normalize: bool,
    pub dtw_band: Option<usize>,
    pub target_scale: TargetScale,
    pub best_epoch: Option<usize>,
    pub train_scans: Vec<String>,
    pub val_scans: Vec<String>,
    pub test_scans: Vec<String>,
}

pub fn meta_path(weights: &Path) -> PathBuf {
    weights.with_extension("meta.json")
}

/// Writes, under the output directory: `resolved_config.toml`,
/// `metrics.jsonl`, `fold_NN.weights` with `fold_NN.meta.json`, and one
/// reconstruction per held-out scan under `reconstructions/`.
pub fn run_train(ctx: &Context, manifest: &Path) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let entries = read_manifest(manifest).map_err(CliError::Io)?;
    let (scans, skipped) = load_scans(&entries, cfg.run.measure, &cfg.qc)?;
    for s in &skipped {
        let d: Vec<&str> = s.defects.iter().map(|d| d.name()).collect();
        eprintln!("skipping {}: trace failed QC ({})", s.scan_id, d.join(", "));
    }
    if scans.is_empty() {
        return Err(CliError::mismatch(anyhow!(
            "no usable scans in {}",
            manifest.display()
        )));
    }
    let result = cross_validate(&scans, &cfg.cv_config())?;

    let dir = ctx.out_dir();
    let io = CliError::Io;
    write_atomic(&dir.join("resolved_config.toml"), |w| {
        Ok(w.write_all(cfg.to_toml().as_bytes())?)
    })
    .map_err(io)?;
    for f in &result.folds {
        let weights = dir.join(format!("fold_{:02}.weights", f.fold));
        write_atomic(&weights, |w| Ok(write_weights(&f.state, w)?)).map_err(io)?;
        let meta = FoldMeta {
            fold: f.fold,
            measure: cfg.run.measure,
            alignment: cfg.run.alignment,
            normalize: cfg.run.normalize,
            dtw_band: cfg.dtw_band(),
            target_scale: f.target_scale,
            best_epoch: f.best_epoch(),
            train_scans: f.train_scans.clone(),
            val_scans: f.val_scans.clone(),
            test_scans: f.test_scans.clone(),
        };
        write_atomic(&meta_path(&weights), |w| {
            serde_json::to_writer_pretty(&mut *w, &meta)?;
            Ok(w.write_all(b"\n")?)
        })
        .map_err(io)?;
        for rec in &f.reconstructions {
            let p = dir
                .join("reconstructions")
                .join(format!("{}.txt", rec.scan_id));
            write_atomic(&p, |w| Ok(rec.write_text(w)?)).map_err(io)?;
        }
    }
    write_atomic(&dir.join("metrics.jsonl"), |w| {
        result.write_stream(&mut *w)?;
        for s in &skipped {
            write_record(w, "skipped", s)?;
        }
        Ok(())
    })
    .map_err(io)?;
    Ok(())
}

/// Metric records for every manifest scan under one fold's weights, then a
/// pooled summary.
pub fn run_eval(ctx: &Context, manifest: &Path, weights: &Path) -> CliResult<()> {
    let state = load_weights(weights)?;
    let meta_file = meta_path(weights);
    let meta: FoldMeta = std::fs::read(&meta_file)
        .map_err(anyhow::Error::from)
        .and_then(|b| Ok(serde_json::from_slice(&b)?))
        .with_context(|| format!("reading {}", meta_file.display()))
        .map_err(CliError::Io)?;
    let entries = read_manifest(manifest).map_err(CliError::Io)?;
    let (scans, skipped) = load_scans(&entries, meta.measure, &ctx.cfg.qc)?;
    let mut reports = Vec::with_capacity(scans.len());
    for s in &scans {
        let (r, _) = evaluate_scan(
            &state.network,
            s,
            meta.alignment,
            meta.target_scale,
            meta.normalize,
            meta.dtw_band,
        )?;
        reports.push(r);
    }
    write_output(ctx.out.as_deref(), |w| {
        for r in &reports {
            write_record(
                w,
                "metric",
                &FoldMetric {
                    fold: meta.fold,
                    report: r.clone(),
                },
            )?;
        }
        for s in &skipped {
            write_record(w, "skipped", s)?;
        }
        write_record(w, "fold_summary", &summarize_all(&reports))?;
        Ok(())
    })
    .map_err(CliError::Io)
}
