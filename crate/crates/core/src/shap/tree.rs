//! Interventional Shapley values for tree ensembles.
//!
//! For a single background row `z`, walk the tree with `x` and `z` together.
//! Where they route differently on a feature not yet fixed, both branches are
//! explored: following `x` puts the feature in the set `A` that must come from
//! `x`, following `z` puts it in the set `B` that must come from `z`. A leaf
//! with value `v` is reached exactly by the coalitions containing `A` and
//! avoiding `B`, a game whose Shapley values are
//! `v (|A|-1)! |B|! / (|A|+|B|)!` for members of `A` and
//! `-v |A|! (|B|-1)! / (|A|+|B|)!` for members of `B`.
//! Summing over leaves and trees and averaging over the background gives the
//! interventional attribution.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use super::{background_ref, base_value, check_background, Attribution, Method};
use crate::cohort::FeatureMatrix;
use crate::models::{TrainedModel, Tree};
use crate::{Error, Result};

struct Walk<'a> {
    tree: &'a Tree,
    x: ArrayView1<'a, f64>,
    z: ArrayView1<'a, f64>,
    fact: &'a [f64],
    state: &'a mut [u8],
    a: Vec<usize>,
    b: Vec<usize>,
    phi: &'a mut [f64],
}

const FREE: u8 = 0;
const FROM_X: u8 = 1;
const FROM_Z: u8 = 2;

impl Walk<'_> {
    fn go(&mut self, node: usize) {
        let n = &self.tree.nodes[node];
        let Some(s) = &n.split else {
            let (a, b) = (self.a.len(), self.b.len());
            if a + b == 0 {
                return;
            }
            let v = self.tree.weight * n.value;
            if a > 0 {
                let w = v * self.fact[a - 1] * self.fact[b] / self.fact[a + b];
                for &i in &self.a {
                    self.phi[i] += w;
                }
            }
            if b > 0 {
                let w = v * self.fact[a] * self.fact[b - 1] / self.fact[a + b];
                for &i in &self.b {
                    self.phi[i] -= w;
                }
            }
            return;
        };
        let j = s.feature;
        let child = |left: bool| if left { s.left } else { s.right };
        let x_left = self.x[j] < s.threshold;
        let z_left = self.z[j] < s.threshold;
        match self.state[j] {
            FROM_X => self.go(child(x_left)),
            FROM_Z => self.go(child(z_left)),
            _ if x_left == z_left => self.go(child(x_left)),
            _ => {
                self.state[j] = FROM_X;
                self.a.push(j);
                self.go(child(x_left));
                self.a.pop();
                self.state[j] = FROM_Z;
                self.b.push(j);
                self.go(child(z_left));
                self.b.pop();
                self.state[j] = FREE;
            }
        }
    }
}

fn factorials(p: usize) -> Vec<f64> {
    let mut f = vec![1.0; p + 2];
    for k in 1..f.len() {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Shapley values of one row, summed over trees and averaged over background rows.
pub(crate) fn row_phi(
    trees: &[Tree],
    x: ArrayView1<f64>,
    background: &FeatureMatrix,
    fact: &[f64],
) -> Vec<f64> {
    let p = x.len();
    let mut phi = vec![0.0; p];
    let mut state = vec![FREE; p];
    for z in background.rows.rows() {
        for tree in trees {
            Walk { tree, x, z, fact, state: &mut state, a: Vec::new(), b: Vec::new(), phi: &mut phi }.go(0);
        }
    }
    let nb = background.n_rows() as f64;
    phi.iter_mut().for_each(|v| *v /= nb);
    phi
}

/// Interventional tree-path attributions of every row of `matrix`.
pub fn tree_shap(
    model: &TrainedModel,
    matrix: &FeatureMatrix,
    background: &FeatureMatrix,
    background_label: &str,
) -> Result<Attribution> {
    let Some(trees) = model.trees() else {
        return Err(Error::Unsupported(format!(
            "tree_shap needs a tree ensemble, got {}; use shapley_exact",
            model.learner()
        )));
    };
    model.check_columns(matrix)?;
    check_background(model, background)?;
    let p = model.n_features();
    let fact = factorials(p);
    let rows: Vec<Vec<f64>> = (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| row_phi(trees, matrix.rows.row(i), background, &fact))
        .collect();
    let mut values = Array2::zeros((matrix.n_rows(), p));
    for (i, r) in rows.iter().enumerate() {
        values.row_mut(i).assign(&ArrayView1::from(r.as_slice()));
    }
    Ok(Attribution {
        feature_names: model.feature_names.clone(),
        base_value: base_value(model, background),
        values,
        feature_values: matrix.raw.clone(),
        row_ids: matrix.episode_ids.clone(),
        background: background_ref(background, background_label),
        method: Method::Tree,
        output_space: model.explained_space(),
    })
}
