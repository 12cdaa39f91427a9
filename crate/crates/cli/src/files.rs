//! Output files and the scan manifest.

use std::collections::BTreeSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};

/// Writes `path` through a temporary file in the same directory and renames
/// it into place once `body` has succeeded.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("writing into {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| anyhow!(e.error))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Runs `body` against `path` atomically, or against stdout when there is
/// no path.
pub fn write_output(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    match path {
        Some(p) => write_atomic(p, body),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

/// One manifest row. Paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub scan_id: String,
    pub subject_id: String,
    pub trace: PathBuf,
    pub roi: PathBuf,
    pub events: Option<PathBuf>,
}

pub const MANIFEST_HEADER: &str = "scan_id\tsubject_id\ttrace\troi\tevents";

/// Tab-separated `scan_id subject_id trace roi [events]` with a header row;
/// `#` lines are comments and `-` marks a missing events file.
pub fn read_manifest(path: &Path) -> anyhow::Result<Vec<ManifestEntry>> {
    let f = std::fs::File::open(path)
        .with_context(|| format!("opening manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut header_seen = false;
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if t.starts_with("scan_id") {
                continue;
            }
        }
        let cols: Vec<&str> = t.split('\t').map(str::trim).collect();
        if !(4..=5).contains(&cols.len()) {
            bail!(
                "{}:{}: expected 4 or 5 tab-separated columns, found {}",
                path.display(),
                i + 1,
                cols.len()
            );
        }
        if !seen.insert(cols[0].to_string()) {
            bail!(
                "{}:{}: duplicate scan id `{}`",
                path.display(),
                i + 1,
                cols[0]
            );
        }
        out.push(ManifestEntry {
            scan_id: cols[0].to_string(),
            subject_id: cols[1].to_string(),
            trace: resolve(cols[2]),
            roi: resolve(cols[3]),
            events: cols.get(4).filter(|c| **c != "-").map(|c| resolve(c)),
        });
    }
    Ok(out)
}

/// Writes rows whose paths are relative to the manifest's directory.
pub fn write_manifest(w: &mut dyn Write, rows: &[ManifestEntry]) -> anyhow::Result<()> {
    writeln!(w, "{MANIFEST_HEADER}")?;
    for r in rows {
        let events = r
            .events
            .as_ref()
            .map_or("-".to_string(), |p| p.display().to_string());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.scan_id,
            r.subject_id,
            r.trace.display(),
            r.roi.display(),
            events
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![ManifestEntry {
            scan_id: "s1".into(),
            subject_id: "p1".into(),
            trace: "s1.trace.txt".into(),
            roi: "s1.roi.txt".into(),
            events: None,
        }];
        let path = dir.path().join("manifest.tsv");
        write_atomic(&path, |w| write_manifest(w, &rows)).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back[0].trace, dir.path().join("s1.trace.txt"));
        assert_eq!(back[0].events, None);
    }

    #[test]
    fn failed_write_leaves_previous_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        std::fs::write(&path, "old").unwrap();
        let r = write_atomic(&path, |w| {
            w.write_all(b"partial")?;
            bail!("boom")
        });
        assert!(r.is_err());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "old");
    }
}
