use rand::Rng as _;

use super::roc::auc;
use crate::stats::percentile;
use crate::{rng, Error, Result};

pub const MIN_RESAMPLES: usize = 200;

/// Percentile (2.5 %, 97.5 %) interval of the AUC over stratified bootstrap
/// resamples: positives and negatives are resampled separately, so every
/// resample keeps the original class counts.
pub fn bootstrap_auc_ci(scores: &[f64], labels: &[u8], n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    if n_boot < MIN_RESAMPLES {
        return Err(Error::config(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {n_boot}"
        )));
    }
    if scores.len() != labels.len() {
        return Err(Error::input("scores and labels differ in length"));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y != 1).map(|(s, _)| *s).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::input(format!(
            "bootstrap needs at least two rows per class ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut draw = rng::stream(seed, "bootstrap");
    let mut y = vec![1u8; pos.len()];
    y.extend(std::iter::repeat_n(0u8, neg.len()));
    let mut s = vec![0.0; y.len()];
    let mut aucs = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for slot in s.iter_mut().take(pos.len()) {
            *slot = pos[draw.random_range(0..pos.len())];
        }
        for slot in s.iter_mut().skip(pos.len()) {
            *slot = neg[draw.random_range(0..neg.len())];
        }
        aucs.push(auc(&s, &y)?);
    }
    aucs.sort_by(f64::total_cmp);
    Ok((percentile(&aucs, 0.025), percentile(&aucs, 0.975)))
}
