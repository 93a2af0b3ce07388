use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Attribution;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMethod {
    /// Largest mean |Phi_jk| over exact interaction matrices.
    ExactInteraction,
    /// Largest within-bin correlation between `x_k` and the part of `phi_j`
    /// not explained linearly by `x_j` (see [`dependence_data`]).
    BinnedResidualHeuristic,
    /// Single-feature model; nothing to color by.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    pub row: String,
    pub x: f64,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceData {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_feature: Option<String>,
    pub color_method: ColorMethod,
    pub points: Vec<DependencePoint>,
}

/// Scores at or below this count as no interaction.
const NEGLIGIBLE: f64 = 1e-9;
const BINS: usize = 10;

/// Dependence-plot data for feature `j`: raw value against its attribution,
/// colored by the feature interacting most with `j`.
///
/// With `interactions` (one exact matrix per sampled row) the color feature
/// maximizes mean |Phi_jk|. Otherwise rows are sorted by `x_j` and cut into
/// ten equal-count bins; inside each bin `phi_j` is regressed linearly on
/// `x_j` and the residual is correlated with every other feature. The score
/// of `k` is the bin-size-weighted mean absolute correlation. Additive models
/// leave no residual, so every score is zero. In both cases the lowest index
/// wins ties.
pub fn dependence_data(
    attr: &Attribution,
    j: usize,
    interactions: Option<&[Array2<f64>]>,
) -> Result<DependenceData> {
    let p = attr.n_features();
    if j >= p {
        return Err(Error::input(format!("feature index {j} out of range for {p} features")));
    }
    let (color, method) = if p == 1 {
        (None, ColorMethod::None)
    } else if let Some(mats) = interactions {
        if mats.is_empty() || mats.iter().any(|m| m.dim() != (p, p)) {
            return Err(Error::input("interaction matrices must be non-empty and p x p"));
        }
        let scores: Vec<f64> =
            (0..p).map(|k| mats.iter().map(|m| m[[j, k]].abs()).sum::<f64>() / mats.len() as f64).collect();
        (Some(argmax_other(&scores, j)), ColorMethod::ExactInteraction)
    } else {
        (Some(argmax_other(&heuristic_scores(attr, j), j)), ColorMethod::BinnedResidualHeuristic)
    };
    let points = (0..attr.n_rows())
        .map(|i| DependencePoint {
            row: attr.row_ids[i].clone(),
            x: attr.feature_values[[i, j]],
            phi: attr.values[[i, j]],
            color: color.map(|k| attr.feature_values[[i, k]]),
        })
        .collect();
    Ok(DependenceData {
        feature: attr.feature_names[j].clone(),
        color_feature: color.map(|k| attr.feature_names[k].clone()),
        color_method: method,
        points,
    })
}

fn argmax_other(scores: &[f64], j: usize) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (k, &s) in scores.iter().enumerate() {
        if k == j {
            continue;
        }
        let s = if s > NEGLIGIBLE { s } else { 0.0 };
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map_or(0, |(k, _)| k)
}

fn heuristic_scores(attr: &Attribution, j: usize) -> Vec<f64> {
    let n = attr.n_rows();
    let p = attr.n_features();
    let x = attr.feature_values.column(j);
    let phi = attr.values.column(j);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let bins = BINS.min(n / 3).max(1);
    let total_var = {
        let m = phi.mean().unwrap_or(0.0);
        phi.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let mut scores = vec![0.0; p];
    let mut weight = 0.0;
    for b in 0..bins {
        let rows = &order[b * n / bins..(b + 1) * n / bins];
        if rows.len() < 3 {
            continue;
        }
        let k = rows.len() as f64;
        let mx = rows.iter().map(|&i| x[i]).sum::<f64>() / k;
        let my = rows.iter().map(|&i| phi[i]).sum::<f64>() / k;
        let sxx: f64 = rows.iter().map(|&i| (x[i] - mx).powi(2)).sum();
        let sxy: f64 = rows.iter().map(|&i| (x[i] - mx) * (phi[i] - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let resid: Vec<f64> = rows.iter().map(|&i| phi[i] - my - slope * (x[i] - mx)).collect();
        let srr: f64 = resid.iter().map(|r| r * r).sum();
        weight += k;
        if srr <= 1e-12 * total_var.max(f64::MIN_POSITIVE) {
            continue;
        }
        for (c, score) in scores.iter_mut().enumerate() {
            if c == j {
                continue;
            }
            let col = attr.feature_values.column(c);
            let mc = rows.iter().map(|&i| col[i]).sum::<f64>() / k;
            let scc: f64 = rows.iter().map(|&i| (col[i] - mc).powi(2)).sum();
            if scc <= 0.0 {
                continue;
            }
            let src: f64 = rows.iter().zip(&resid).map(|(&i, r)| r * (col[i] - mc)).sum();
            *score += k * (src / (srr * scc).sqrt()).abs();
        }
    }
    if weight > 0.0 {
        scores.iter_mut().for_each(|s| *s /= weight);
    }
    scores
}
