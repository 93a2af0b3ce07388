use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Lr,
    Svm,
    Rf,
    Gbt,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Lr => "lr",
            Learner::Svm => "svm",
            Learner::Rf => "rf",
            Learner::Gbt => "gbt",
        }
    }
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(Learner::Lr),
            "svm" => Ok(Learner::Svm),
            "rf" | "forest" => Ok(Learner::Rf),
            "gbt" | "xgb" => Ok(Learner::Gbt),
            _ => Err(Error::config(format!("unknown learner `{s}` (expected lr, svm, rf or gbt)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
    Elasticnet,
}

/// Hyperparameters of one learner. Unset fields take the learner default;
/// setting a field the learner does not use is a validation error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub learner: Learner,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<Penalty>,
    /// Inverse regularization strength.
    #[serde(default, rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Share of the l1 term under the elastic-net penalty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trees: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    /// Features tried per split; defaults to `ceil(log2 p)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colsample_bytree: Option<f64>,
    /// Minimum split gain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// L1 penalty on leaf values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// L2 penalty on leaf values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_child_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub penalty: Penalty,
    pub c: f64,
    pub l1_ratio: f64,
    pub max_epochs: usize,
}

impl LinearParams {
    /// `(l1, l2)` coefficients of the penalty `l1 |b|_1 + l2 |b|^2 / 2`.
    pub fn strengths(&self) -> (f64, f64) {
        let r = match self.penalty {
            Penalty::L1 => 1.0,
            Penalty::L2 => 0.0,
            Penalty::Elasticnet => self.l1_ratio,
        };
        (r / self.c, (1.0 - r) / self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn new(learner: Learner) -> Self {
        ModelConfig {
            learner,
            penalty: None,
            c: None,
            l1_ratio: None,
            max_epochs: None,
            n_trees: None,
            max_depth: None,
            max_features: None,
            bootstrap: None,
            learning_rate: None,
            subsample: None,
            colsample_bytree: None,
            gamma: None,
            alpha: None,
            lambda: None,
            min_child_weight: None,
            dropout_rate: None,
            seed: 0,
        }
    }

    pub fn logistic(penalty: Penalty, c: f64) -> Self {
        ModelConfig { penalty: Some(penalty), c: Some(c), ..Self::new(Learner::Lr) }
    }

    pub fn svm(penalty: Penalty, c: f64) -> Self {
        ModelConfig { penalty: Some(penalty), c: Some(c), ..Self::new(Learner::Svm) }
    }

    pub fn forest(n_trees: usize, max_depth: usize) -> Self {
        ModelConfig { n_trees: Some(n_trees), max_depth: Some(max_depth), ..Self::new(Learner::Rf) }
    }

    pub fn gbt(n_trees: usize, max_depth: usize, learning_rate: f64) -> Self {
        ModelConfig {
            n_trees: Some(n_trees),
            max_depth: Some(max_depth),
            learning_rate: Some(learning_rate),
            ..Self::new(Learner::Gbt)
        }
    }

    /// The best configuration reported for the STEMI cohort: 100 trees of
    /// depth 4, subsample 0.3, gamma 10, eta 0.1, dropout 0.5, alpha 0.9,
    /// lambda 0.6.
    pub fn gbt_reference() -> Self {
        ModelConfig {
            subsample: Some(0.3),
            gamma: Some(10.0),
            dropout_rate: Some(0.5),
            alpha: Some(0.9),
            lambda: Some(0.6),
            ..Self::gbt(100, 4, 0.1)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Names of the set fields that `learner` does not use.
    fn foreign_fields(&self) -> Vec<&'static str> {
        let set: [(&'static str, bool); 16] = [
            ("penalty", self.penalty.is_some()),
            ("C", self.c.is_some()),
            ("l1_ratio", self.l1_ratio.is_some()),
            ("max_epochs", self.max_epochs.is_some()),
            ("n_trees", self.n_trees.is_some()),
            ("max_depth", self.max_depth.is_some()),
            ("max_features", self.max_features.is_some()),
            ("bootstrap", self.bootstrap.is_some()),
            ("learning_rate", self.learning_rate.is_some()),
            ("subsample", self.subsample.is_some()),
            ("colsample_bytree", self.colsample_bytree.is_some()),
            ("gamma", self.gamma.is_some()),
            ("alpha", self.alpha.is_some()),
            ("lambda", self.lambda.is_some()),
            ("min_child_weight", self.min_child_weight.is_some()),
            ("dropout_rate", self.dropout_rate.is_some()),
        ];
        let allowed: &[&str] = match self.learner {
            Learner::Lr | Learner::Svm => &["penalty", "C", "l1_ratio", "max_epochs"],
            Learner::Rf => &["n_trees", "max_depth", "max_features", "bootstrap"],
            Learner::Gbt => &[
                "n_trees",
                "max_depth",
                "learning_rate",
                "subsample",
                "colsample_bytree",
                "gamma",
                "alpha",
                "lambda",
                "min_child_weight",
                "dropout_rate",
            ],
        };
        set.iter().filter(|(name, on)| *on && !allowed.contains(name)).map(|(name, _)| *name).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let foreign = self.foreign_fields();
        if !foreign.is_empty() {
            return Err(Error::config(format!("{} does not use: {}", self.learner, foreign.join(", "))));
        }
        match self.learner {
            Learner::Lr | Learner::Svm => {
                self.linear_params()?;
            }
            Learner::Rf => {
                self.forest_params()?;
            }
            Learner::Gbt => {
                self.gbt_params()?;
            }
        }
        Ok(())
    }

    pub fn linear_params(&self) -> Result<LinearParams> {
        let p = LinearParams {
            penalty: self.penalty.unwrap_or(Penalty::L2),
            c: self.c.unwrap_or(1.0),
            l1_ratio: self.l1_ratio.unwrap_or(0.5),
            max_epochs: self.max_epochs.unwrap_or(1000),
        };
        check(p.c > 0.0 && p.c.is_finite(), "C must be a positive finite number")?;
        check((0.0..=1.0).contains(&p.l1_ratio), "l1_ratio must lie in [0, 1]")?;
        check(p.max_epochs >= 1, "max_epochs must be at least 1")?;
        if self.learner == Learner::Svm && p.penalty == Penalty::Elasticnet {
            return Err(Error::config("svm supports the l1 and l2 penalties only"));
        }
        Ok(p)
    }

    pub fn forest_params(&self) -> Result<ForestParams> {
        let p = ForestParams {
            n_trees: self.n_trees.unwrap_or(100),
            max_depth: self.max_depth.unwrap_or(6),
            max_features: self.max_features,
            bootstrap: self.bootstrap.unwrap_or(true),
        };
        check(p.n_trees >= 1, "n_trees must be at least 1")?;
        check(p.max_depth >= 1, "max_depth must be at least 1")?;
        check(p.max_features != Some(0), "max_features must be at least 1")?;
        Ok(p)
    }

    pub fn gbt_params(&self) -> Result<GbtParams> {
        let p = GbtParams {
            n_trees: self.n_trees.unwrap_or(100),
            max_depth: self.max_depth.unwrap_or(4),
            learning_rate: self.learning_rate.unwrap_or(0.1),
            subsample: self.subsample.unwrap_or(1.0),
            colsample_bytree: self.colsample_bytree.unwrap_or(1.0),
            gamma: self.gamma.unwrap_or(0.0),
            alpha: self.alpha.unwrap_or(0.0),
            lambda: self.lambda.unwrap_or(1.0),
            min_child_weight: self.min_child_weight.unwrap_or(1.0),
            dropout_rate: self.dropout_rate.unwrap_or(0.0),
        };
        check(p.n_trees >= 1, "n_trees must be at least 1")?;
        check(p.max_depth >= 1, "max_depth must be at least 1")?;
        check(p.learning_rate >= 0.0 && p.learning_rate.is_finite(), "learning_rate must be non-negative")?;
        check(p.subsample > 0.0 && p.subsample <= 1.0, "subsample must lie in (0, 1]")?;
        check(p.colsample_bytree > 0.0 && p.colsample_bytree <= 1.0, "colsample_bytree must lie in (0, 1]")?;
        check(p.gamma >= 0.0 && !p.gamma.is_nan(), "gamma must be non-negative")?;
        check(p.alpha >= 0.0 && p.alpha.is_finite(), "alpha must be non-negative")?;
        check(p.lambda >= 0.0 && p.lambda.is_finite(), "lambda must be non-negative")?;
        check(p.min_child_weight >= 0.0, "min_child_weight must be non-negative")?;
        check((0.0..1.0).contains(&p.dropout_rate), "dropout_rate must lie in [0, 1)")?;
        Ok(p)
    }

    /// Compact `key=value` rendering used in reports.
    pub fn label(&self) -> String {
        let v = serde_json::to_value(self).unwrap_or_default();
        let mut parts = vec![self.learner.to_string()];
        if let serde_json::Value::Object(map) = v {
            for (k, val) in map {
                if k != "learner" && k != "seed" {
                    parts.push(format!("{k}={}", val.to_string().trim_matches('"')));
                }
            }
        }
        parts.join(" ")
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn foreign_fields_rejected() {
        let mut c = ModelConfig::logistic(Penalty::L2, 1.0);
        c.n_trees = Some(10);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("n_trees"), "{err}");
    }

    #[test]
    fn depth_zero_rejected() {
        assert!(ModelConfig::forest(10, 0).validate().is_err());
        assert!(ModelConfig::gbt(10, 0, 0.1).validate().is_err());
    }

    #[test]
    fn json_uses_capital_c() {
        let c = ModelConfig::logistic(Penalty::L1, 0.1);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"learner":"lr","penalty":"l1","C":0.1,"seed":0}"#);
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
