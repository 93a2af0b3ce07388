//! Class-weighted learners and the fitted-model container.

mod config;
mod forest;
mod gbt;
mod linear;
mod model;
mod tree;
mod weights;

pub use config::{ForestParams, GbtParams, Learner, LinearParams, ModelConfig, Penalty};
pub use forest::{default_max_features, fit_random_forest};
pub use gbt::{fit_gbt, NO_SPLIT_WARNING};
pub use linear::{
    fit_linear_svm, fit_logistic, objective, weighted_loss, weighted_loss_gradient, weighted_loss_hessian,
    Loss, Platt, TOLERANCE,
};
pub use model::{
    EnsemblePayload, LinearPayload, Payload, ScoreSpace, TrainedModel, TrainingMetadata, FORMAT_VERSION,
};
pub use tree::{Node, Split, Tree};
pub use weights::{class_weights, ClassWeights};

use crate::cohort::FeatureMatrix;
use crate::Result;

/// Fits the learner named by `config.learner`.
pub fn fit(
    x: &FeatureMatrix,
    labels: &[u8],
    weights: &ClassWeights,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    match config.learner {
        Learner::Lr => fit_logistic(x, labels, weights, config),
        Learner::Svm => fit_linear_svm(x, labels, weights, config),
        Learner::Rf => fit_random_forest(x, labels, weights, config),
        Learner::Gbt => fit_gbt(x, labels, weights, config),
    }
}
