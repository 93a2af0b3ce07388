use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;

use super::hybrid;
use crate::cohort::FeatureMatrix;
use crate::models::TrainedModel;
use crate::{Error, Result};

/// Largest feature count for which all `2^p` coalitions are enumerated.
pub const MAX_EXACT_FEATURES: usize = 20;

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Interventional payoff of every coalition, indexed by bit mask.
pub(crate) fn payoffs<F>(f: &F, x: ArrayView1<f64>, background: ArrayView2<f64>) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let p = x.len();
    let nb = background.nrows() as f64;
    (0..1u32 << p)
        .into_par_iter()
        .map_init(
            || vec![0.0; p],
            |buf, mask| {
                let mut s = 0.0;
                for z in background.rows() {
                    hybrid(x, z, mask, buf);
                    s += f(buf);
                }
                s / nb
            },
        )
        .collect()
}

/// Exact Shapley values of `f` at `x` by enumerating every coalition.
/// Returns `(phi, base_value)` with `base_value` the payoff of the empty set.
pub fn shapley_exact_fn<F>(f: &F, x: ArrayView1<f64>, background: ArrayView2<f64>) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let p = x.len();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::Unsupported(format!(
            "exact enumeration is limited to {MAX_EXACT_FEATURES} features (got {p}); use tree_shap for tree ensembles or linear_shap for linear models"
        )));
    }
    if background.nrows() == 0 || background.ncols() != p {
        return Err(Error::input("background must be non-empty with one column per feature"));
    }
    let v = payoffs(f, x, background);
    let weight: Vec<f64> = (0..p).map(|s| 1.0 / (p as f64 * binomial(p - 1, s))).collect();
    let mut phi = vec![0.0; p];
    for (j, ph) in phi.iter_mut().enumerate() {
        let bit = 1u32 << j;
        for mask in 0..1u32 << p {
            if mask & bit == 0 {
                *ph += weight[mask.count_ones() as usize] * (v[(mask | bit) as usize] - v[mask as usize]);
            }
        }
    }
    Ok((phi, v[0]))
}

/// Exact Shapley values of the model's explained output at one row.
pub fn shapley_exact(
    model: &TrainedModel,
    row: ArrayView1<f64>,
    background: &FeatureMatrix,
) -> Result<(Vec<f64>, f64)> {
    super::check_background(model, background)?;
    let f = |v: &[f64]| model.explained_row(ArrayView1::from(v));
    shapley_exact_fn(&f, row, background.rows.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn and_model_splits_payoff() {
        let f = |v: &[f64]| v[0] * v[1];
        let (phi, base) = shapley_exact_fn(&f, array![1.0, 1.0].view(), array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(base, 0.0);
        assert!((phi[0] - 0.5).abs() < 1e-15 && (phi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_many_features() {
        let x = ndarray::Array1::<f64>::zeros(21);
        let bg = ndarray::Array2::<f64>::zeros((1, 21));
        let err = shapley_exact_fn(&|_: &[f64]| 0.0, x.view(), bg.view()).unwrap_err();
        assert!(err.to_string().contains("tree_shap"));
    }
}
