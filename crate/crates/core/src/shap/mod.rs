//! Shapley attributions of model outputs.
//!
//! The payoff of a coalition `S` for row `x` is interventional: the mean
//! model output over background rows `z` with the features outside `S`
//! taken from `z`. Attributions decompose [`TrainedModel::explained_row`],
//! which is the log-odds for every learner except random forests, whose
//! averaged leaf probabilities are decomposed directly.

mod dependence;
mod exact;
mod explanation;
mod importance;
mod interaction;
mod linear;
mod plots;
mod tree;

pub use dependence::{dependence_data, ColorMethod, DependenceData, DependencePoint};
pub use exact::{shapley_exact, shapley_exact_fn, MAX_EXACT_FEATURES};
pub use explanation::{force_explanation, Contribution, Explanation};
pub use importance::{
    feature_importance, subgroup_importance, subgroup_importance_matched, summary_data, Grouping,
    ImportanceEntry, ImportanceRanking, SubgroupRanking, SummaryData, SummaryFeature, SummaryPoint,
};
pub use interaction::{
    interaction_values, interaction_values_fn, InteractionMatrix, MAX_INTERACTION_FEATURES,
};
pub use linear::linear_shap;
pub use plots::{dependence_svg, force_svg, summary_svg};
pub use tree::tree_shap;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::cohort::{ColumnDescriptor, Derivation, FeatureMatrix};
use crate::models::{Payload, ScoreSpace, TrainedModel};
use crate::{rng, Error, Result};

/// Default background sample size.
pub const DEFAULT_BACKGROUND: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Tree,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundRef {
    pub id: String,
    pub size: usize,
}

/// Per-row Shapley values with the raw feature values they explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    /// `n x p` Shapley values.
    pub values: Array2<f64>,
    /// `n x p` raw (clinical unit) values for display.
    pub feature_values: Array2<f64>,
    pub row_ids: Vec<String>,
    pub background: BackgroundRef,
    pub method: Method,
    pub output_space: ScoreSpace,
}

impl Attribution {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// `base_value + sum_j phi_ij`.
    pub fn output(&self, i: usize) -> f64 {
        self.base_value + self.values.row(i).sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Attribution {
        Attribution {
            values: self.values.select(Axis(0), rows),
            feature_values: self.feature_values.select(Axis(0), rows),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Sums the attributions of derived columns sharing a source feature
    /// (`urea@min`, `urea@max`, `urea@mean` become `urea`). The displayed
    /// value of a group is its `@mean` column when present, else its first.
    pub fn group_by_source(&self, columns: &[ColumnDescriptor]) -> Result<Attribution> {
        if columns.len() != self.n_features() {
            return Err(Error::ColumnMismatch(format!(
                "{} column descriptors for {} attributed features",
                columns.len(),
                self.n_features()
            )));
        }
        let mut sources: Vec<String> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (j, c) in columns.iter().enumerate() {
            match sources.iter().position(|s| *s == c.source) {
                Some(k) => members[k].push(j),
                None => {
                    sources.push(c.source.clone());
                    members.push(vec![j]);
                }
            }
        }
        let n = self.n_rows();
        let mut values = Array2::zeros((n, sources.len()));
        let mut shown = Array2::zeros((n, sources.len()));
        for (k, cols) in members.iter().enumerate() {
            let display =
                cols.iter().copied().find(|&j| columns[j].derivation == Derivation::Mean).unwrap_or(cols[0]);
            for i in 0..n {
                values[[i, k]] = cols.iter().map(|&j| self.values[[i, j]]).sum();
                shown[[i, k]] = self.feature_values[[i, display]];
            }
        }
        Ok(Attribution { feature_names: sources, values, feature_values: shown, ..self.clone() })
    }

    /// CSV with one row per explained row: `row_id,base_value,<features>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row_id,base_value");
        for f in &self.feature_names {
            out.push(',');
            out.push_str(&csv_field(f));
        }
        out.push('\n');
        for (i, id) in self.row_ids.iter().enumerate() {
            out.push_str(&csv_field(id));
            out.push_str(&format!(",{}", self.base_value));
            for v in self.values.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Seeded sample of up to `size` rows (without replacement, original order).
pub fn sample_background(matrix: &FeatureMatrix, size: usize, seed: u64) -> Result<FeatureMatrix> {
    let n = matrix.n_rows();
    if n == 0 || size == 0 {
        return Err(Error::input("background sample must be non-empty"));
    }
    let mut rows = if size >= n {
        (0..n).collect()
    } else {
        let mut draw = rng::stream(seed, "background");
        sample(&mut draw, n, size).into_vec()
    };
    rows.sort_unstable();
    Ok(matrix.select_rows(&rows))
}

pub(crate) fn check_background(model: &TrainedModel, background: &FeatureMatrix) -> Result<()> {
    if background.n_rows() == 0 {
        return Err(Error::input("background sample must be non-empty"));
    }
    if background.n_cols() != model.n_features() {
        return Err(Error::ColumnMismatch(format!(
            "background has {} columns, model expects {}",
            background.n_cols(),
            model.n_features()
        )));
    }
    Ok(())
}

/// Mean explained output over the background.
pub(crate) fn base_value(model: &TrainedModel, background: &FeatureMatrix) -> f64 {
    let rows = background.rows.rows();
    rows.into_iter().map(|z| model.explained_row(z)).sum::<f64>() / background.n_rows() as f64
}

pub(crate) fn background_ref(background: &FeatureMatrix, label: &str) -> BackgroundRef {
    BackgroundRef { id: label.to_string(), size: background.n_rows() }
}

/// Attributes every row of `matrix` with the best exact method for the
/// model: closed form for linear models, tree paths for ensembles.
pub fn attribute(
    model: &TrainedModel,
    matrix: &FeatureMatrix,
    background: &FeatureMatrix,
    background_label: &str,
) -> Result<Attribution> {
    match model.payload {
        Payload::Linear(_) => linear_shap(model, matrix, background, background_label),
        Payload::Ensemble(_) => tree_shap(model, matrix, background, background_label),
    }
}

pub(crate) fn hybrid(x: ArrayView1<f64>, z: ArrayView1<f64>, mask: u32, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = if mask >> j & 1 == 1 { x[j] } else { z[j] };
    }
}
