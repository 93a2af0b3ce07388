use serde::{Deserialize, Serialize};

use super::roc::class_counts;
use crate::stats::normal_two_sided;
use crate::{Error, Result};

/// Variance below which two curves are treated as indistinguishable.
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Midranks (1-based, ties averaged).
fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = mid;
        }
        i = j + 1;
    }
    r
}

/// Structural components `(V10 over positives, V01 over negatives)`.
fn components(scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y != 1).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let tz = midranks(&all);
    let tx = midranks(&pos);
    let ty = midranks(&neg);
    let v10 = (0..pos.len()).map(|i| (tz[i] - tx[i]) / n).collect();
    let v01 = (0..neg.len()).map(|j| 1.0 - (tz[pos.len() + j] - ty[j]) / m).collect();
    (v10, v01)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / k, b.iter().sum::<f64>() / k);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (k - 1.0)
}

/// DeLong test for two correlated AUCs computed on the same rows.
pub fn delong_test(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> Result<DelongResult> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(Error::input("paired scores must match the labels in length"));
    }
    let (n_pos, n_neg) = class_counts(labels)?;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::input("DeLong variance needs at least two rows per class"));
    }
    let (a10, a01) = components(scores_a, labels);
    let (b10, b01) = components(scores_b, labels);
    let auc_a = a10.iter().sum::<f64>() / n_pos as f64;
    let auc_b = b10.iter().sum::<f64>() / n_pos as f64;
    let s10 = covariance(&a10, &a10) + covariance(&b10, &b10) - 2.0 * covariance(&a10, &b10);
    let s01 = covariance(&a01, &a01) + covariance(&b01, &b01) - 2.0 * covariance(&a01, &b01);
    let variance = s10 / n_pos as f64 + s01 / n_neg as f64;
    if !(variance >= MIN_VARIANCE) {
        return Err(Error::DegenerateVariance(variance));
    }
    let z = (auc_a - auc_b) / variance.sqrt();
    Ok(DelongResult { auc_a, auc_b, variance, z, p_value: normal_two_sided(z) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_scores_are_degenerate() {
        let s = [0.1, 0.5, 0.3, 0.9, 0.7, 0.2];
        let y = [0, 1, 0, 1, 1, 0];
        let err = delong_test(&s, &s, &y).unwrap_err();
        assert!(err.to_string().starts_with("degenerate variance"));
        let t: Vec<f64> = s.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!(delong_test(&s, &t, &y).is_err());
    }
}
