use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::{Learner, ModelConfig};
use super::linear::Platt;
use super::tree::Tree;
use super::weights::ClassWeights;
use crate::cohort::matrix::column_diff;
use crate::cohort::FeatureMatrix;
use crate::stats::{logit, sigmoid};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Probabilities are clipped to `[EPS, 1 - EPS]` before taking log-odds.
const EPS: f64 = 1e-6;

/// Scale of the additive raw score of a tree ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpace {
    LogOdds,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPayload {
    pub coefficients: Vec<f64>,
    /// Calibration of the decision value (SVM only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platt: Option<Platt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePayload {
    pub space: ScoreSpace,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Linear(LinearPayload),
    Ensemble(EnsemblePayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n: usize,
    pub p: usize,
    pub class_weights: ClassWeights,
    pub seed: u64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Out-of-bag AUC (random forest with bootstrap).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// A fitted model. The raw score is `base_score + x.beta` for linear models
/// and `base_score + sum_t weight_t * leaf_t(x)` for tree ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub payload: Payload,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    pub(crate) fn new(
        config: ModelConfig,
        feature_names: Vec<String>,
        base_score: f64,
        payload: Payload,
        metadata: TrainingMetadata,
    ) -> Self {
        TrainedModel { format_version: FORMAT_VERSION, config, feature_names, base_score, payload, metadata }
    }

    pub fn learner(&self) -> Learner {
        self.config.learner
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn trees(&self) -> Option<&[Tree]> {
        match &self.payload {
            Payload::Ensemble(e) => Some(&e.trees),
            Payload::Linear(_) => None,
        }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::Linear(l) => Some(&l.coefficients),
            Payload::Ensemble(_) => None,
        }
    }

    /// Additive model output: log-odds for LR and boosting, the decision
    /// value for SVM and the mean leaf probability for random forests.
    /// Shapley attributions decompose this quantity.
    pub fn raw_row(&self, x: ArrayView1<f64>) -> f64 {
        match &self.payload {
            Payload::Linear(l) => {
                self.base_score + l.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
            }
            Payload::Ensemble(e) => self.base_score + e.trees.iter().map(|t| t.predict(x)).sum::<f64>(),
        }
    }

    pub fn margin_from_raw(&self, raw: f64) -> f64 {
        match &self.payload {
            Payload::Linear(LinearPayload { platt: Some(p), .. }) => p.log_odds(raw),
            Payload::Ensemble(EnsemblePayload { space: ScoreSpace::Probability, .. }) => {
                logit(raw.clamp(EPS, 1.0 - EPS))
            }
            _ => raw,
        }
    }

    /// Output decomposed by Shapley attributions: log-odds, except for
    /// random forests whose leaves average probabilities.
    pub fn explained_row(&self, x: ArrayView1<f64>) -> f64 {
        match &self.payload {
            Payload::Linear(LinearPayload { platt: Some(p), .. }) => p.log_odds(self.raw_row(x)),
            _ => self.raw_row(x),
        }
    }

    pub fn explained_space(&self) -> ScoreSpace {
        match &self.payload {
            Payload::Ensemble(e) => e.space,
            Payload::Linear(_) => ScoreSpace::LogOdds,
        }
    }

    /// Raw scores of every row, without column checks.
    pub fn raw_scores(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.raw_row(r)).collect()
    }

    pub fn margins(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.margin_from_raw(self.raw_row(r))).collect()
    }

    pub fn probabilities(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.margins(x).into_iter().map(sigmoid).collect()
    }

    pub fn check_columns(&self, matrix: &FeatureMatrix) -> Result<()> {
        let names: Vec<&str> = matrix.columns.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.feature_names.len()
            || names.iter().zip(&self.feature_names).any(|(a, b)| a != b)
        {
            return Err(Error::ColumnMismatch(column_diff(&self.feature_names, &names)));
        }
        Ok(())
    }

    pub fn predict_raw(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(matrix)?;
        Ok(self.raw_scores(matrix.rows.view()))
    }

    /// Log-odds of mortality.
    pub fn predict_margin(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(matrix)?;
        Ok(self.margins(matrix.rows.view()))
    }

    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(matrix)?;
        Ok(self.probabilities(matrix.rows.view()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(s)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "model format version {} (this build reads {FORMAT_VERSION})",
                model.format_version
            )));
        }
        model.check_structure()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_structure(&self) -> Result<()> {
        let p = self.feature_names.len();
        match &self.payload {
            Payload::Linear(l) if l.coefficients.len() != p => {
                Err(Error::input(format!("{} coefficients for {p} features", l.coefficients.len())))
            }
            Payload::Ensemble(e) => {
                if e.trees.iter().any(|t| t.nodes.is_empty()) {
                    return Err(Error::input("empty tree"));
                }
                for (t, tree) in e.trees.iter().enumerate() {
                    let len = tree.nodes.len();
                    for (i, node) in tree.nodes.iter().enumerate() {
                        if let Some(s) = &node.split {
                            let child_ok = |c: usize| c > i && c < len;
                            if s.feature >= p
                                || !s.threshold.is_finite()
                                || !child_ok(s.left)
                                || !child_ok(s.right)
                            {
                                return Err(Error::input(format!("tree {t} has an invalid split")));
                            }
                        }
                        if !node.value.is_finite() {
                            return Err(Error::input(format!("tree {t} has a non-finite leaf value")));
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
