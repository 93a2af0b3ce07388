use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::{rng, Error, Result};

/// Disjoint train/test row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
}

/// Random holdout split of a matrix's rows.
pub fn split_holdout(matrix: &FeatureMatrix, test_fraction: f64, seed: u64) -> Result<SplitIndex> {
    split_indices(&matrix.labels, test_fraction, seed)
}

/// Uniform random permutation keyed by `seed`; the first
/// `round_half_up(test_fraction * n)` permuted rows form the test set.
/// Index sets are returned in ascending order.
pub fn split_indices(labels: &[u8], test_fraction: f64, seed: u64) -> Result<SplitIndex> {
    let n = labels.len();
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    if n < 5 {
        return Err(Error::input(format!("holdout split needs at least 5 rows, got {n}")));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::OneClass);
    }
    let n_test = (test_fraction * n as f64 + 0.5).floor() as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, "split"));
    let mut test_rows = perm[..n_test].to_vec();
    let mut train_rows = perm[n_test..].to_vec();
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    for (part, rows) in [("train", &train_rows), ("test", &test_rows)] {
        for class in [0u8, 1] {
            if !rows.iter().any(|&i| labels[i] == class) {
                return Err(Error::DegenerateSplit(format!(
                    "class {class} absent from the {part} partition"
                )));
            }
        }
    }
    Ok(SplitIndex { train_rows, test_rows, seed })
}
