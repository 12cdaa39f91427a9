//! Subject-level k-fold assignment.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// scan id -> fold index in `0..k`.
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, scan_id: &str) -> Option<usize> {
        self.assignments.get(scan_id).copied()
    }

    /// Scan ids of one fold, sorted.
    pub fn scans_in(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

/// Shuffles the distinct subjects with a seeded generator, deals them
/// round-robin into `k` folds, and gives every scan its subject's fold.
///
/// Subjects are sorted before shuffling, so the plan does not depend on the
/// order of `scan_index`.
pub fn make_folds(scan_index: &[(String, String)], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(DatasetError::InvalidFolds("k must be at least 1".into()));
    }
    let mut subject_of: BTreeMap<&str, &str> = BTreeMap::new();
    for (scan, subject) in scan_index {
        if let Some(prev) = subject_of.insert(scan, subject) {
            if prev != subject {
                return Err(DatasetError::InvalidFolds(format!(
                    "scan `{scan}` listed under subjects `{prev}` and `{subject}`"
                )));
            }
        }
    }
    let mut subjects: Vec<&str> = subject_of
        .values()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < k {
        return Err(DatasetError::TooFewSubjects {
            subjects: subjects.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let fold_of_subject: BTreeMap<&str, usize> = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i % k))
        .collect();
    let assignments = subject_of
        .iter()
        .map(|(scan, subj)| (scan.to_string(), fold_of_subject[subj]))
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}
