use serde::{Deserialize, Serialize};

use super::Attribution;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    /// Raw feature value.
    pub value: f64,
    pub phi: f64,
}

/// One row's prediction as a walk from the base value to the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub row: String,
    pub base_value: f64,
    pub output_value: f64,
    /// Non-zero contributions by descending |phi|.
    pub contributions: Vec<Contribution>,
}

/// Explanation of row `i` of an attribution.
pub fn force_explanation(attr: &Attribution, i: usize) -> Result<Explanation> {
    if i >= attr.n_rows() {
        return Err(Error::input(format!("row {i} out of range for {} rows", attr.n_rows())));
    }
    let mut contributions: Vec<Contribution> = attr
        .feature_names
        .iter()
        .enumerate()
        .filter(|(j, _)| attr.values[[i, *j]] != 0.0)
        .map(|(j, f)| Contribution {
            feature: f.clone(),
            value: attr.feature_values[[i, j]],
            phi: attr.values[[i, j]],
        })
        .collect();
    // Stable sort keeps column order among equal magnitudes.
    contributions.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()));
    Ok(Explanation {
        row: attr.row_ids[i].clone(),
        base_value: attr.base_value,
        output_value: attr.output(i),
        contributions,
    })
}

impl Explanation {
    /// `base value=3.75 and output value=4.13` style caption.
    pub fn caption(&self) -> String {
        format!("base value={:.2} and output value={:.2}", self.base_value, self.output_value)
    }
}
