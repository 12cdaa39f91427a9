use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, MetricReport, Result, METRIC_NAMES};
use crate::dataset::FoldPlan;
use crate::stats::{cmp_f64, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary with linearly interpolated quartiles; `None` for an
/// empty slice.
pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(cmp_f64);
    Some(FiveNumber {
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// `None` when every report lacked this metric.
    pub summary: Option<FiveNumber>,
    pub n: usize,
    /// Reports where the metric was undefined.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    /// `None` for the pooled summary over all folds.
    pub fold: Option<usize>,
    pub n_scans: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl FoldSummary {
    fn from_reports(fold: Option<usize>, reports: &[&MetricReport]) -> Self {
        let metrics = METRIC_NAMES
            .iter()
            .map(|&name| {
                let vals: Vec<f64> = reports.iter().filter_map(|r| r.get(name)).collect();
                let s = MetricSummary {
                    summary: five_number(&vals),
                    n: vals.len(),
                    excluded: reports.len() - vals.len(),
                };
                (name.to_string(), s)
            })
            .collect();
        Self {
            fold,
            n_scans: reports.len(),
            metrics,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.values().all(|m| m.summary.is_none())
    }
}

/// One summary per fold of `plan`, in fold order.
pub fn summarize_folds(reports: &[MetricReport], plan: &FoldPlan) -> Result<Vec<FoldSummary>> {
    let mut by_fold: Vec<Vec<&MetricReport>> = vec![Vec::new(); plan.k];
    for r in reports {
        let f = plan
            .fold_of(&r.scan_id)
            .ok_or_else(|| MetricError::UnknownScan(r.scan_id.clone()))?;
        by_fold[f].push(r);
    }
    Ok(by_fold
        .iter()
        .enumerate()
        .map(|(f, rs)| FoldSummary::from_reports(Some(f), rs))
        .collect())
}

/// Pooled summary over every report.
pub fn summarize_all(reports: &[MetricReport]) -> FoldSummary {
    let refs: Vec<&MetricReport> = reports.iter().collect();
    FoldSummary::from_reports(None, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AlignmentMode;
    use crate::physio::Measure;

    fn report(id: &str, v: f64, r: Option<f64>) -> MetricReport {
        MetricReport {
            scan_id: id.into(),
            measure: Measure::Rv,
            alignment: AlignmentMode::Middle,
            n_points: 10,
            mae: v,
            mse: v * v,
            r_squared: r,
            pearson_r: r,
            dtw: v,
        }
    }

    fn plan(ids: &[(&str, usize)], k: usize) -> FoldPlan {
        FoldPlan {
            k,
            seed: 0,
            assignments: ids.iter().map(|(s, f)| (s.to_string(), *f)).collect(),
        }
    }

    #[test]
    fn quartiles_of_one_to_five() {
        let f = five_number(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(
            (f.min, f.q1, f.median, f.q3, f.max),
            (1.0, 2.0, 3.0, 4.0, 5.0)
        );
        assert!(five_number(&[]).is_none());
    }

    #[test]
    fn single_scan_fold_and_absent_metrics() {
        let p = plan(&[("a", 0), ("b", 1)], 3);
        let rs = vec![report("a", 2.0, Some(0.5)), report("b", 1.0, None)];
        let s = summarize_folds(&rs, &p).unwrap();
        assert_eq!(s.len(), 3);
        let mae = s[0].metrics["mae"].summary.unwrap();
        assert_eq!(
            (mae.min, mae.q1, mae.median, mae.q3, mae.max),
            (2.0, 2.0, 2.0, 2.0, 2.0)
        );
        assert_eq!(s[1].metrics["pearson_r"].excluded, 1);
        assert!(s[1].metrics["pearson_r"].summary.is_none());
        assert!(s[2].is_empty());
        assert_eq!(s[2].n_scans, 0);
    }

    #[test]
    fn unknown_scan_is_an_error() {
        let p = plan(&[("a", 0)], 1);
        assert!(matches!(
            summarize_folds(&[report("z", 1.0, None)], &p),
            Err(MetricError::UnknownScan(_))
        ));
    }
}
