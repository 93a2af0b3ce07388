use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::exact::{binomial, payoffs};
use crate::cohort::FeatureMatrix;
use crate::models::TrainedModel;
use crate::{Error, Result};

pub const MAX_INTERACTION_FEATURES: usize = 12;

/// Shapley interaction index of one row. Off-diagonal entries split each
/// pairwise interaction evenly between `(j, k)` and `(k, j)`; the diagonal
/// holds the main effect, so every row sums to that feature's Shapley value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub feature_names: Vec<String>,
    pub values: Array2<f64>,
}

/// Exact interaction matrix of `f` at `x`.
pub fn interaction_values_fn<F>(f: &F, x: ArrayView1<f64>, background: ArrayView2<f64>) -> Result<Array2<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let p = x.len();
    if p > MAX_INTERACTION_FEATURES {
        return Err(Error::Unsupported(format!(
            "exact interaction values are limited to {MAX_INTERACTION_FEATURES} features (got {p})"
        )));
    }
    if background.nrows() == 0 || background.ncols() != p {
        return Err(Error::input("background must be non-empty with one column per feature"));
    }
    let v = payoffs(f, x, background);
    let mut out = Array2::zeros((p, p));
    if p == 1 {
        out[[0, 0]] = v[1] - v[0];
        return Ok(out);
    }
    let pair_weight: Vec<f64> =
        (0..p - 1).map(|s| 1.0 / (2.0 * (p - 1) as f64 * binomial(p - 2, s))).collect();
    let main_weight: Vec<f64> = (0..p).map(|s| 1.0 / (p as f64 * binomial(p - 1, s))).collect();
    for j in 0..p {
        for k in j + 1..p {
            let (bj, bk) = (1u32 << j, 1u32 << k);
            let mut s = 0.0;
            for mask in 0..1u32 << p {
                if mask & (bj | bk) == 0 {
                    let d = v[(mask | bj | bk) as usize] - v[(mask | bj) as usize] - v[(mask | bk) as usize]
                        + v[mask as usize];
                    s += pair_weight[mask.count_ones() as usize] * d;
                }
            }
            out[[j, k]] = s;
            out[[k, j]] = s;
        }
    }
    for j in 0..p {
        let bit = 1u32 << j;
        let mut phi = 0.0;
        for mask in 0..1u32 << p {
            if mask & bit == 0 {
                phi +=
                    main_weight[mask.count_ones() as usize] * (v[(mask | bit) as usize] - v[mask as usize]);
            }
        }
        let off: f64 = (0..p).filter(|&k| k != j).map(|k| out[[j, k]]).sum();
        out[[j, j]] = phi - off;
    }
    Ok(out)
}

pub fn interaction_values(
    model: &TrainedModel,
    row: ArrayView1<f64>,
    background: &FeatureMatrix,
) -> Result<InteractionMatrix> {
    super::check_background(model, background)?;
    let f = |v: &[f64]| model.explained_row(ArrayView1::from(v));
    Ok(InteractionMatrix {
        feature_names: model.feature_names.clone(),
        values: interaction_values_fn(&f, row, background.rows.view())?,
    })
}
