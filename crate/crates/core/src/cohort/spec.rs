use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    StaticCategorical,
    StaticNumeric,
    DynamicNumeric,
    BinaryFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClinicalSet {
    Demographic,
    Complications,
    Treatments,
    Procedures,
    BloodGas,
    Laboratory,
    Hemodynamic,
    VitalSigns,
}

/// One declared clinical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub clinical_set: ClinicalSet,
    #[serde(default)]
    pub unit: String,
    /// Category levels for static-categorical features. When empty the
    /// levels observed in the data are used, in sorted order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl FeatureSpec {
    pub fn new(name: &str, kind: FeatureKind, clinical_set: ClinicalSet) -> Self {
        FeatureSpec { name: name.to_string(), kind, clinical_set, unit: String::new(), levels: Vec::new() }
    }

    pub fn with_unit(mut self, unit: &str) -> Self {
        self.unit = unit.to_string();
        self
    }

    pub fn with_levels(mut self, levels: &[&str]) -> Self {
        self.levels = levels.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Checks name uniqueness and that names are usable as CSV headers.
pub fn validate_specs(specs: &[FeatureSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in specs {
        if s.name.is_empty() || s.name.contains(['@', '=', ',', '"', '\n']) {
            return Err(Error::InvalidSpec(format!(
                "feature name `{}` is empty or contains a reserved character",
                s.name
            )));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(Error::InvalidSpec(format!("duplicate feature name `{}`", s.name)));
        }
        if s.kind != FeatureKind::StaticCategorical && !s.levels.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "feature `{}` declares levels but is not categorical",
                s.name
            )));
        }
        let mut lv = HashSet::new();
        if !s.levels.iter().all(|l| lv.insert(l)) {
            return Err(Error::InvalidSpec(format!("duplicate level in `{}`", s.name)));
        }
    }
    Ok(())
}

/// Reads a JSON array of feature specs.
pub fn load_feature_specs(path: impl AsRef<Path>) -> Result<Vec<FeatureSpec>> {
    let text = std::fs::read_to_string(path)?;
    let specs: Vec<FeatureSpec> = serde_json::from_str(&text)?;
    validate_specs(&specs)?;
    Ok(specs)
}
