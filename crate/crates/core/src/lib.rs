//! Interpretable tabular risk modeling.
//!
//! The crate is organised along the pipeline it implements:
//!
//! - [`cohort`]: the episode CSV contract, design-matrix construction,
//!   cohort summaries and a seeded synthetic cohort generator with planted
//!   ground truth.
//! - [`models`]: class-weighted learners (elastic-net logistic regression,
//!   linear SVM, random forest, second-order gradient boosting with DART).
//! - [`eval`]: ROC analytics, stratified repeated cross-validation, grid
//!   search, bootstrap intervals and the DeLong / McNemar paired tests.
//! - [`shap`]: exact and tree-path interventional Shapley attributions,
//!   importances, interaction matrices and explanation artifacts.
//! - [`baselines`]: the GRACE point score and Cox proportional hazards.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cohort;
mod error;
pub mod eval;
pub mod models;
pub mod rng;
pub mod shap;
pub mod stats;
pub mod svg;

pub use error::{Error, Result};

pub use baselines::{CoxFit, GraceInput, GracePointTable, MarkerComparison};
pub use cohort::{FeatureMatrix, FeatureSpec, RawEpisode, SplitIndex};
pub use eval::{EvalReport, RocCurve};
pub use models::{ClassWeights, Learner, ModelConfig, TrainedModel};
pub use shap::{Attribution, Explanation, ImportanceRanking, InteractionMatrix};

/// Tool version embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
