use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::cv::{complement, stratified_folds, CvPlan};
use super::roc::auc;
use crate::cohort::FeatureMatrix;
use crate::models::{self, class_weights, Learner, ModelConfig, TrainedModel};
use crate::stats::{mean, sd};
use crate::{Error, Result};

/// Cartesian hyperparameter grid over a base configuration. Axes are keyed by
/// the JSON field names of [`ModelConfig`]; the first axis varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub base: ModelConfig,
    pub axes: Vec<(String, Vec<Value>)>,
}

/// Shared by the logistic and SVM grids: `10^-3 .. 10^3`.
pub const PAPER_C: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
pub const PAPER_TREES: [usize; 3] = [50, 100, 200];
pub const PAPER_DEPTHS: [usize; 3] = [2, 4, 6];
pub const PAPER_SUBSAMPLE: [f64; 4] = [0.3, 0.4, 0.8, 0.9];
pub const PAPER_LEARNING_RATE: [f64; 3] = [0.05, 0.1, 0.5];
pub const PAPER_DROPOUT: [f64; 2] = [0.3, 0.5];
pub const PAPER_GAMMA: [f64; 5] = [10.0, 20.0, 30.0, 40.0, 50.0];
/// Leaf penalties of the reported best boosting model; fixed across the grid.
pub const PAPER_ALPHA: f64 = 0.9;
pub const PAPER_LAMBDA: f64 = 0.6;
/// Tree count reported for one best model but absent from the grid.
pub const MANUAL_TREES: usize = 250;

fn values<T: Serialize>(xs: &[T]) -> Vec<Value> {
    xs.iter().map(|x| json!(x)).collect()
}

impl Grid {
    pub fn single(config: ModelConfig) -> Self {
        Grid { base: config, axes: Vec::new() }
    }

    /// The published search space for `learner`.
    pub fn paper(learner: Learner) -> Self {
        let base = ModelConfig::new(learner);
        let axes = match learner {
            Learner::Lr => {
                vec![("penalty".into(), values(&["l1", "l2", "elasticnet"])), ("C".into(), values(&PAPER_C))]
            }
            Learner::Svm => vec![("penalty".into(), values(&["l1", "l2"])), ("C".into(), values(&PAPER_C))],
            Learner::Rf => {
                vec![("n_trees".into(), values(&PAPER_TREES)), ("max_depth".into(), values(&PAPER_DEPTHS))]
            }
            Learner::Gbt => vec![
                ("n_trees".into(), values(&PAPER_TREES)),
                ("subsample".into(), values(&PAPER_SUBSAMPLE)),
                ("learning_rate".into(), values(&PAPER_LEARNING_RATE)),
                ("dropout_rate".into(), values(&PAPER_DROPOUT)),
                ("gamma".into(), values(&PAPER_GAMMA)),
                ("max_depth".into(), values(&PAPER_DEPTHS)),
            ],
        };
        let base = if learner == Learner::Gbt {
            ModelConfig { alpha: Some(PAPER_ALPHA), lambda: Some(PAPER_LAMBDA), ..base }
        } else {
            base
        };
        Grid { base, axes }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every configuration of the grid, validated, in enumeration order.
    pub fn configs(&self) -> Result<Vec<ModelConfig>> {
        let base = match serde_json::to_value(&self.base)? {
            Value::Object(m) => m,
            _ => unreachable!("configs serialize as objects"),
        };
        let mut out: Vec<Map<String, Value>> = vec![base];
        for (key, vals) in &self.axes {
            if vals.is_empty() {
                return Err(Error::config(format!("grid axis `{key}` has no values")));
            }
            out = out
                .into_iter()
                .flat_map(|m| {
                    vals.iter().map(move |v| {
                        let mut m = m.clone();
                        m.insert(key.clone(), v.clone());
                        m
                    })
                })
                .collect();
        }
        out.into_iter()
            .map(|m| {
                let c: ModelConfig = serde_json::from_value(Value::Object(m))
                    .map_err(|e| Error::config(format!("grid point: {e}")))?;
                c.validate()?;
                Ok(c)
            })
            .collect()
    }
}

/// Checks that every set hyperparameter lies on the published grid. A tree
/// count of 250 is accepted only with `allow_manual_trees`.
pub fn check_paper_legal(config: &ModelConfig, allow_manual_trees: bool) -> Result<()> {
    fn within<T: PartialEq + std::fmt::Debug>(name: &str, v: Option<T>, allowed: &[T]) -> Result<()> {
        match v {
            Some(v) if !allowed.contains(&v) => {
                Err(Error::config(format!("{name} = {v:?} is off the published grid {allowed:?}")))
            }
            _ => Ok(()),
        }
    }
    config.validate()?;
    let mut trees = PAPER_TREES.to_vec();
    if allow_manual_trees {
        trees.push(MANUAL_TREES);
    }
    within("C", config.c, &PAPER_C)?;
    within("n_trees", config.n_trees, &trees)?;
    within("max_depth", config.max_depth, &PAPER_DEPTHS)?;
    within("subsample", config.subsample, &PAPER_SUBSAMPLE)?;
    within("learning_rate", config.learning_rate, &PAPER_LEARNING_RATE)?;
    within("dropout_rate", config.dropout_rate, &PAPER_DROPOUT)?;
    within("gamma", config.gamma, &PAPER_GAMMA)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: ModelConfig,
    pub mean_auc: f64,
    pub sd_auc: f64,
    /// AUC per evaluated fold, in (repeat, fold) order.
    pub fold_aucs: Vec<f64>,
    /// Folds skipped because their validation rows held one class.
    pub skipped_folds: usize,
}

impl GridEntry {
    /// `0.89 ± 0.03`
    pub fn formatted(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean_auc, self.sd_auc)
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Entries in enumeration order.
    pub entries: Vec<GridEntry>,
    /// Entry indices, best first.
    pub ranking: Vec<usize>,
    /// The winning configuration refitted on all supplied rows.
    pub best: TrainedModel,
}

impl GridResult {
    pub fn best_entry(&self) -> &GridEntry {
        &self.entries[self.ranking[0]]
    }
}

/// Ranks entries by mean AUC (descending), then sd (ascending), then
/// enumeration order.
pub fn rank(entries: &[GridEntry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&entries[a], &entries[b]);
        y.mean_auc.total_cmp(&x.mean_auc).then(x.sd_auc.total_cmp(&y.sd_auc)).then(a.cmp(&b))
    });
    order
}

/// Cross-validated AUC of one configuration per fold; `None` marks a fold
/// whose validation rows hold a single class.
pub fn cross_validate(
    x: &FeatureMatrix,
    labels: &[u8],
    config: &ModelConfig,
    plan: &CvPlan,
) -> Result<Vec<Option<f64>>> {
    let folds = stratified_folds(labels, plan)?;
    let tasks: Vec<&Vec<usize>> = folds.iter().flatten().collect();
    tasks.par_iter().map(|v| fold_auc(x, labels, config, v)).collect()
}

fn fold_auc(
    x: &FeatureMatrix,
    labels: &[u8],
    config: &ModelConfig,
    validation: &[usize],
) -> Result<Option<f64>> {
    let train = complement(labels.len(), validation);
    let ty: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
    let vy: Vec<u8> = validation.iter().map(|&i| labels[i]).collect();
    if vy.iter().all(|&y| y == vy[0]) {
        return Ok(None);
    }
    let weights = class_weights(&ty)?;
    let model = models::fit(&x.select_rows(&train), &ty, &weights, config)?;
    let vx = x.rows.select(ndarray::Axis(0), validation);
    Ok(Some(auc(&model.raw_scores(vx.view()), &vy)?))
}

/// Evaluates every grid configuration by repeated cross-validation, ranks
/// them and refits the winner on all rows.
pub fn grid_search(x: &FeatureMatrix, labels: &[u8], grid: &Grid, plan: &CvPlan) -> Result<GridResult> {
    let configs = grid.configs()?;
    if configs.is_empty() {
        return Err(Error::config("empty grid"));
    }
    let folds = stratified_folds(labels, plan)?;
    let flat: Vec<&Vec<usize>> = folds.iter().flatten().collect();
    let tasks: Vec<(usize, usize)> =
        (0..configs.len()).flat_map(|c| (0..flat.len()).map(move |f| (c, f))).collect();
    let results: Vec<Option<f64>> =
        tasks.par_iter().map(|&(c, f)| fold_auc(x, labels, &configs[c], flat[f])).collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(configs.len());
    for (c, config) in configs.into_iter().enumerate() {
        let per = &results[c * flat.len()..(c + 1) * flat.len()];
        let fold_aucs: Vec<f64> = per.iter().flatten().copied().collect();
        let skipped = per.len() - fold_aucs.len();
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} single-class validation folds", config.label());
        }
        if fold_aucs.is_empty() {
            return Err(Error::input("every validation fold held a single class"));
        }
        entries.push(GridEntry {
            mean_auc: mean(&fold_aucs),
            sd_auc: sd(&fold_aucs),
            fold_aucs,
            skipped_folds: skipped,
            config,
        });
    }
    let ranking = rank(&entries);
    let winner = &entries[ranking[0]].config;
    let best = models::fit(x, labels, &class_weights(labels)?, winner)?;
    Ok(GridResult { entries, ranking, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_sizes() {
        assert_eq!(Grid::paper(Learner::Gbt).configs().unwrap().len(), 1080);
        assert_eq!(Grid::paper(Learner::Lr).configs().unwrap().len(), 21);
        assert_eq!(Grid::paper(Learner::Svm).len(), 14);
        assert_eq!(Grid::paper(Learner::Rf).len(), 9);
    }

    #[test]
    fn manual_tree_count_needs_override() {
        let mut c = ModelConfig::gbt_reference();
        c.n_trees = Some(MANUAL_TREES);
        assert!(check_paper_legal(&c, false).is_err());
        assert!(check_paper_legal(&c, true).is_ok());
        c.gamma = Some(15.0);
        assert!(check_paper_legal(&c, true).is_err());
    }

    #[test]
    fn reference_config_is_on_grid() {
        let configs = Grid::paper(Learner::Gbt).configs().unwrap();
        let reference = ModelConfig::gbt_reference();
        assert!(configs.contains(&reference));
    }
}
