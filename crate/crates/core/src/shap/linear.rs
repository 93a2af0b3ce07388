use ndarray::Array2;

use super::{background_ref, base_value, check_background, Attribution, Method};
use crate::cohort::FeatureMatrix;
use crate::models::{Payload, TrainedModel};
use crate::{Error, Result};

/// Closed-form interventional attributions of a linear model:
/// `phi_j = s * beta_j * (x_j - mean_background_j)` where `s` is the Platt
/// slope for SVMs and 1 otherwise.
pub fn linear_shap(
    model: &TrainedModel,
    matrix: &FeatureMatrix,
    background: &FeatureMatrix,
    background_label: &str,
) -> Result<Attribution> {
    let Payload::Linear(lin) = &model.payload else {
        return Err(Error::Unsupported("linear_shap needs a linear model; use tree_shap".into()));
    };
    model.check_columns(matrix)?;
    check_background(model, background)?;
    let scale = lin.platt.map_or(1.0, |p| p.a);
    let p = model.n_features();
    let means: Vec<f64> = (0..p).map(|j| background.rows.column(j).mean().unwrap_or(0.0)).collect();
    let mut values = Array2::zeros((matrix.n_rows(), p));
    for (i, row) in matrix.rows.rows().into_iter().enumerate() {
        for j in 0..p {
            values[[i, j]] = scale * lin.coefficients[j] * (row[j] - means[j]);
        }
    }
    Ok(Attribution {
        feature_names: model.feature_names.clone(),
        base_value: base_value(model, background),
        values,
        feature_values: matrix.raw.clone(),
        row_ids: matrix.episode_ids.clone(),
        background: background_ref(background, background_label),
        method: Method::Linear,
        output_space: model.explained_space(),
    })
}
