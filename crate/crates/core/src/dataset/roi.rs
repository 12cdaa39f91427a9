use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;

use super::{DatasetError, Result};

/// Number of ROIs in the reference parcellation.
pub const DEFAULT_N_ROIS: usize = 90;

/// ROI-averaged BOLD values, one row per volume and one column per ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTimeseries {
    pub scan_id: String,
    pub subject_id: Option<String>,
    pub data: Array2<f64>,
    pub tr_seconds: f64,
    pub roi_names: Vec<String>,
}

impl RoiTimeseries {
    pub fn n_volumes(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_rois(&self) -> usize {
        self.data.ncols()
    }

    /// Reads the text format: `# key=value` headers (`tr_seconds` required,
    /// `scan_id` and `subject_id` optional), a tab-separated row of ROI names,
    /// then one tab-separated row per volume.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut scan_id = String::new();
        let mut subject_id = None;
        let mut tr = None;
        let mut names: Option<Vec<String>> = None;
        let mut flat = Vec::new();
        let mut rows = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim_end_matches(['\r', '\n']);
            if t.trim().is_empty() {
                continue;
            }
            if let Some(h) = t.trim_start().strip_prefix('#') {
                if let Some((k, v)) = h.split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "tr_seconds" => {
                            tr = Some(v.parse::<f64>().map_err(|e| DatasetError::Parse {
                                line: lineno,
                                msg: format!("bad tr_seconds: {e}"),
                            })?)
                        }
                        "scan_id" => scan_id = v.to_string(),
                        "subject_id" => subject_id = Some(v.to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            let Some(names) = names.as_ref() else {
                names = Some(t.split('\t').map(|s| s.trim().to_string()).collect());
                continue;
            };
            let before = flat.len();
            for (col, cell) in t.split('\t').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|e| DatasetError::Parse {
                    line: lineno,
                    msg: format!("column {}: {e}", col + 1),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFiniteValue {
                        line: lineno,
                        col: col + 1,
                    });
                }
                flat.push(v);
            }
            let got = flat.len() - before;
            if got != names.len() {
                return Err(DatasetError::Parse {
                    line: lineno,
                    msg: format!("row has {got} values, header names {}", names.len()),
                });
            }
            rows += 1;
        }
        let tr = tr.ok_or(DatasetError::MissingMetadata("tr_seconds"))?;
        if !(tr > 0.0) {
            return Err(DatasetError::Parse {
                line: 0,
                msg: format!("tr_seconds must be positive, got {tr}"),
            });
        }
        let names = names.unwrap_or_default();
        if rows == 0 {
            return Err(DatasetError::Parse {
                line: 0,
                msg: "no data rows".into(),
            });
        }
        let data = Array2::from_shape_vec((rows, names.len()), flat)
            .expect("row lengths checked against header");
        Ok(Self {
            scan_id,
            subject_id,
            data,
            tr_seconds: tr,
            roi_names: names,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f))
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# tr_seconds={}", self.tr_seconds)?;
        writeln!(w, "# scan_id={}", self.scan_id)?;
        if let Some(s) = &self.subject_id {
            writeln!(w, "# subject_id={s}")?;
        }
        writeln!(w, "{}", self.roi_names.join("\t"))?;
        let mut line = String::new();
        for row in self.data.rows() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push('\t');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// ROI names `roi_001`, `roi_002`, ...
    pub fn default_names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("roi_{i:03}")).collect()
    }
}
