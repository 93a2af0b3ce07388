//! Second-order gradient boosting on the class-weighted logistic loss.
//!
//! Per row `g = w (p - y)` and `h = w p (1 - p)`. A node with sums `(G, H)`
//! scores `T(G)^2 / (H + lambda)` where `T` soft-thresholds by `alpha`; its
//! leaf value is `-eta T(G) / (H + lambda)`. A split is kept when its gain
//! exceeds `gamma` and both children carry hessian mass of at least
//! `min_child_weight`.
//!
//! With a positive dropout rate every earlier tree is dropped independently
//! with that probability before the gradients are computed. When `k` trees
//! are dropped the new tree enters with weight `1 / (k + eta)` and the
//! dropped ones are rescaled by `k / (k + eta)`.

use rand::Rng as _;

use super::config::{GbtParams, Learner, ModelConfig};
use super::model::{EnsemblePayload, Payload, ScoreSpace, TrainedModel, TrainingMetadata};
use super::tree::{presort, Criterion, Grower, Tree};
use super::weights::ClassWeights;
use crate::cohort::FeatureMatrix;
use crate::stats::{logit, sigmoid};
use crate::{rng, Error, Result};

pub const NO_SPLIT_WARNING: &str = "no splits passed gamma";

struct SecondOrder<'a>(&'a GbtParams);

impl SecondOrder<'_> {
    fn shrink(&self, g: f64) -> f64 {
        let a = self.0.alpha;
        if g > a {
            g - a
        } else if g < -a {
            g + a
        } else {
            0.0
        }
    }
}

impl Criterion for SecondOrder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let d = h + self.0.lambda;
        if d <= 0.0 {
            return 0.0;
        }
        let t = self.shrink(g);
        t * t / d
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let d = h + self.0.lambda;
        if d <= 0.0 {
            return 0.0;
        }
        -self.0.learning_rate * self.shrink(g) / d
    }

    fn cover(&self, _g: f64, h: f64) -> f64 {
        h
    }

    fn admissible(&self, _g: f64, h: f64) -> bool {
        h >= self.0.min_child_weight && h > 0.0
    }

    fn accept(&self, gain: f64, _g: f64, _h: f64) -> bool {
        gain > self.0.gamma
    }
}

pub fn fit_gbt(
    x: &FeatureMatrix,
    labels: &[u8],
    weights: &ClassWeights,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    if config.learner != Learner::Gbt {
        return Err(Error::config("fit_gbt needs a gbt config"));
    }
    config.validate()?;
    let params = config.gbt_params()?;
    let (n, p) = x.rows.dim();
    if labels.len() != n || n == 0 {
        return Err(Error::input(format!("{} labels for {n} rows", labels.len())));
    }
    if x.rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("design matrix contains non-finite values"));
    }
    let w = weights.per_row(labels);
    let w_pos: f64 = w.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(wi, _)| wi).sum();
    let w_all: f64 = w.iter().sum();
    let base_score = logit((w_pos / w_all).clamp(1e-6, 1.0 - 1e-6));

    let sorted = presort(x.rows.view());
    let criterion = SecondOrder(&params);
    let mut trees: Vec<Tree> = Vec::new();
    // Unweighted per-row output of every tree, for dropout.
    let mut outputs: Vec<Vec<f64>> = Vec::new();
    let mut f = vec![base_score; n];
    let mut dart = rng::stream(config.seed, "dart");
    let mut warnings = Vec::new();

    for m in 0..params.n_trees {
        let dropped: Vec<usize> = if params.dropout_rate > 0.0 {
            (0..trees.len()).filter(|_| dart.random::<f64>() < params.dropout_rate).collect()
        } else {
            Vec::new()
        };
        let mut f_drop = f.clone();
        for &t in &dropped {
            for (fi, o) in f_drop.iter_mut().zip(&outputs[t]) {
                *fi -= trees[t].weight * o;
            }
        }

        let in_sample: Vec<bool> = if params.subsample < 1.0 {
            let mut draw = rng::substream(config.seed, "subsample", m as u64);
            let s: Vec<bool> = (0..n).map(|_| draw.random::<f64>() < params.subsample).collect();
            if s.iter().any(|&b| b) {
                s
            } else {
                vec![true; n]
            }
        } else {
            vec![true; n]
        };
        let features: Vec<usize> = if params.colsample_bytree < 1.0 {
            let k = ((params.colsample_bytree * p as f64).ceil() as usize).clamp(1, p.max(1));
            let mut draw = rng::substream(config.seed, "colsample", m as u64);
            let mut s = rand::seq::index::sample(&mut draw, p, k).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..p).collect()
        };

        let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            if in_sample[i] {
                let pr = sigmoid(f_drop[i]);
                g[i] = w[i] * (pr - f64::from(labels[i]));
                h[i] = w[i] * pr * (1.0 - pr);
            }
        }
        let root: Vec<Vec<u32>> = features
            .iter()
            .map(|&j| sorted[j].iter().copied().filter(|&i| in_sample[i as usize]).collect())
            .collect();
        let grower =
            Grower { x: x.rows.view(), a: &g, b: &h, criterion: &criterion, max_depth: params.max_depth };
        let all: Vec<usize> = (0..features.len()).collect();
        let mut tree = grower.grow(&features, root, &mut || all.clone());

        if m == 0 && tree.is_leaf() {
            log::warn!("{NO_SPLIT_WARNING}");
            warnings.push(NO_SPLIT_WARNING.to_string());
            break;
        }

        let k = dropped.len() as f64;
        let eta = params.learning_rate;
        let new_weight = if dropped.is_empty() { 1.0 } else { 1.0 / (k + eta) };
        tree.weight = new_weight;
        if !dropped.is_empty() {
            let factor = k / (k + eta);
            for &t in &dropped {
                trees[t].weight *= factor;
            }
        }
        let out: Vec<f64> = x.rows.rows().into_iter().map(|r| tree.value(r)).collect();
        trees.push(tree);
        outputs.push(out);
        if dropped.is_empty() {
            let last = trees.len() - 1;
            for (fi, o) in f.iter_mut().zip(&outputs[last]) {
                *fi += new_weight * o;
            }
        } else {
            // Rebuild margins from scratch so repeated rescaling cannot drift.
            f.fill(base_score);
            for (t, o) in trees.iter().zip(&outputs) {
                for (fi, v) in f.iter_mut().zip(o) {
                    *fi += t.weight * v;
                }
            }
        }
    }

    Ok(TrainedModel::new(
        config.clone(),
        x.column_names(),
        base_score,
        Payload::Ensemble(EnsemblePayload { space: ScoreSpace::LogOdds, trees }),
        TrainingMetadata {
            n,
            p,
            class_weights: *weights,
            seed: config.seed,
            converged: true,
            epochs: None,
            oob_auc: None,
            warnings,
        },
    ))
}
