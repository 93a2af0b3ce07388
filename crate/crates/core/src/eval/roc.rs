use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Rows with `score >= threshold` are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Empirical ROC curve from `(0, 0)` to `(1, 1)`; tied scores form a single
/// (possibly diagonal) step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

pub(crate) fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("ROC analysis needs both classes"));
    }
    Ok((n_pos, n_neg))
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::input(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::input("scores must be finite"));
    }
    class_counts(labels)
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        // Trapezoid in count units; normalised once at the end.
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push(RocPoint { threshold: s, fpr: fp as f64 / n_neg as f64, tpr: tp as f64 / n_pos as f64 });
    }
    Ok(RocCurve { points, auc: auc / (n_pos as f64 * n_neg as f64) })
}

/// Area under the ROC curve.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(roc_curve(scores, labels)?.auc)
}

/// `(sensitivity, specificity)` when `score >= threshold` is called positive.
pub fn sens_spec(scores: &[f64], labels: &[u8], threshold: f64) -> Result<(f64, f64)> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    Ok((tp as f64 / n_pos as f64, tn as f64 / n_neg as f64))
}

/// Threshold maximizing Youden's J = tpr - fpr; the highest such threshold
/// wins ties.
pub fn youden_threshold(curve: &RocCurve) -> f64 {
    let mut best = curve.points[0];
    for p in &curve.points[1..] {
        if p.tpr - p.fpr > best.tpr - best.fpr {
            best = *p;
        }
    }
    if best.threshold.is_infinite() {
        // J = 0 everywhere: call everything positive.
        curve.points.last().map_or(0.0, |p| p.threshold)
    } else {
        best.threshold
    }
}

/// Renders `threshold,fpr,tpr` rows.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}
