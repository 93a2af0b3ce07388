use rand::Rng as _;
use rayon::prelude::*;

use super::config::{Learner, ModelConfig};
use super::model::{EnsemblePayload, Payload, ScoreSpace, TrainedModel, TrainingMetadata};
use super::tree::{presort, Criterion, Grower, Tree};
use super::weights::ClassWeights;
use crate::cohort::FeatureMatrix;
use crate::{eval, rng, Error, Result};

/// Class-weighted Gini over per-row class weights `(a, b) = (w0 mass, w1 mass)`.
struct Gini;

impl Criterion for Gini {
    /// `-W * gini = (a^2 + b^2) / W - W`.
    fn score(&self, a: f64, b: f64) -> f64 {
        let w = a + b;
        if w <= 0.0 {
            0.0
        } else {
            (a * a + b * b) / w - w
        }
    }

    fn leaf_value(&self, a: f64, b: f64) -> f64 {
        if a + b > 0.0 {
            b / (a + b)
        } else {
            0.0
        }
    }

    fn cover(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    fn admissible(&self, a: f64, b: f64) -> bool {
        a + b > 0.0
    }

    fn accept(&self, gain: f64, a: f64, b: f64) -> bool {
        gain > 1e-12 * (a + b)
    }
}

/// Default number of features tried per split: `ceil(log2 p)`, at least 1.
pub fn default_max_features(p: usize) -> usize {
    if p <= 1 {
        1
    } else {
        (usize::BITS - (p - 1).leading_zeros()) as usize
    }
}

/// Random forest of class-weighted Gini trees. Each tree sees a bootstrap
/// sample and tries a seeded subset of features at every split; the forest
/// predicts the mean of the per-tree class-1 leaf frequencies.
pub fn fit_random_forest(
    x: &FeatureMatrix,
    labels: &[u8],
    weights: &ClassWeights,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    if config.learner != Learner::Rf {
        return Err(Error::config("fit_random_forest needs an rf config"));
    }
    config.validate()?;
    let params = config.forest_params()?;
    let (n, p) = x.rows.dim();
    if labels.len() != n || n == 0 {
        return Err(Error::input(format!("{} labels for {n} rows", labels.len())));
    }
    if x.rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("design matrix contains non-finite values"));
    }
    let k = params.max_features.unwrap_or_else(|| default_max_features(p)).min(p);
    let sorted = presort(x.rows.view());
    let features: Vec<usize> = (0..p).collect();

    let grown: Vec<(Tree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut draw = rng::substream(config.seed, "forest", t as u64);
            let mut counts = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    counts[draw.random_range(0..n)] += 1;
                }
            } else {
                counts.fill(1);
            }
            let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
                .map(|i| {
                    let m = f64::from(counts[i]) * weights.of(labels[i]);
                    if labels[i] == 1 {
                        (0.0, m)
                    } else {
                        (m, 0.0)
                    }
                })
                .unzip();
            let root: Vec<Vec<u32>> = sorted
                .iter()
                .map(|l| l.iter().copied().filter(|&i| counts[i as usize] > 0).collect())
                .collect();
            let grower =
                Grower { x: x.rows.view(), a: &a, b: &b, criterion: &Gini, max_depth: params.max_depth };
            let mut pick = || {
                let mut s = rand::seq::index::sample(&mut draw, p, k).into_vec();
                s.sort_unstable();
                s
            };
            let mut tree = grower.grow(&features, root, &mut pick);
            tree.weight = 1.0 / params.n_trees as f64;
            (tree, counts)
        })
        .collect();

    let oob_auc = if params.bootstrap { oob_auc(x, labels, &grown) } else { None };
    let (trees, _): (Vec<Tree>, Vec<_>) = grown.into_iter().unzip();
    Ok(TrainedModel::new(
        config.clone(),
        x.column_names(),
        0.0,
        Payload::Ensemble(EnsemblePayload { space: ScoreSpace::Probability, trees }),
        TrainingMetadata {
            n,
            p,
            class_weights: *weights,
            seed: config.seed,
            converged: true,
            epochs: None,
            oob_auc,
            warnings: Vec::new(),
        },
    ))
}

fn oob_auc(x: &FeatureMatrix, labels: &[u8], grown: &[(Tree, Vec<u32>)]) -> Option<f64> {
    let mut scores = Vec::new();
    let mut ys = Vec::new();
    for (i, row) in x.rows.rows().into_iter().enumerate() {
        let (sum, k) = grown
            .iter()
            .filter(|(_, c)| c[i] == 0)
            .fold((0.0, 0usize), |(s, k), (t, _)| (s + t.value(row), k + 1));
        if k > 0 {
            scores.push(sum / k as f64);
            ys.push(labels[i]);
        }
    }
    eval::auc(&scores, &ys).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log2_feature_count() {
        let got: Vec<usize> = [1, 2, 3, 4, 5, 8, 9, 30].iter().map(|&p| default_max_features(p)).collect();
        assert_eq!(got, vec![1, 1, 2, 2, 3, 3, 4, 5]);
    }
}
