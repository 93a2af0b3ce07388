//! Episode records to a standardized numeric design matrix.
//!
//! Construction is split in two steps: [`RawColumns::extract`] expands every
//! feature into its derived columns (NaN marks missing), and a
//! [`Preprocessor`] fitted on a chosen set of rows imputes column means and
//! z-scores. [`build_matrix`] fits on every row; [`build_matrix_fitted_on`]
//! fits on a subset (the leakage-safe variant for a training partition).

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::episode::{RawEpisode, Sex};
use super::spec::{validate_specs, FeatureKind, FeatureSpec};
use super::{BUILTIN_AGE, BUILTIN_LOS, BUILTIN_SEX};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    Value,
    Min,
    Max,
    Mean,
    Level(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub name: String,
    pub source: String,
    pub derivation: Derivation,
    /// Fraction of rows whose value was imputed.
    pub imputed_fraction: f64,
    /// Zero-variance column; stored as zeros and skipped by learners.
    pub constant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTag {
    pub sex: Sex,
    pub age: f64,
}

/// Expanded but not yet imputed columns.
#[derive(Debug, Clone)]
pub struct RawColumns {
    pub columns: Vec<ColumnDescriptor>,
    /// n x p, NaN where missing.
    pub values: Array2<f64>,
    pub labels: Vec<u8>,
    pub tags: Vec<SubgroupTag>,
    pub episode_ids: Vec<String>,
    pub survival: Vec<Option<f64>>,
}

impl RawColumns {
    pub fn extract(episodes: &[RawEpisode], spec: &[FeatureSpec]) -> Result<Self> {
        validate_specs(spec)?;
        if spec.is_empty() {
            return Err(Error::input("at least one feature is required"));
        }
        let n = episodes.len();
        let mut columns = Vec::new();
        let mut data: Vec<Vec<f64>> = Vec::new();
        for f in spec {
            let mut push = |derivation: Derivation, name: String, vals: Vec<f64>| {
                columns.push(ColumnDescriptor {
                    name,
                    source: f.name.clone(),
                    derivation,
                    imputed_fraction: 0.0,
                    constant: false,
                });
                data.push(vals);
            };
            match (f.name.as_str(), f.kind) {
                (BUILTIN_AGE, _) => {
                    push(Derivation::Value, f.name.clone(), episodes.iter().map(|e| e.age).collect())
                }
                (BUILTIN_LOS, _) => push(
                    Derivation::Value,
                    f.name.clone(),
                    episodes.iter().map(|e| e.length_of_stay).collect(),
                ),
                (BUILTIN_SEX, _) => {
                    for s in [Sex::Female, Sex::Male] {
                        push(
                            Derivation::Level(s.to_string()),
                            format!("sex={s}"),
                            episodes.iter().map(|e| f64::from(u8::from(e.sex == s))).collect(),
                        );
                    }
                }
                (_, FeatureKind::DynamicNumeric) => {
                    let summaries: Vec<_> = episodes
                        .iter()
                        .map(|e| {
                            e.dynamic_values.get(&f.name).map(|d| d.summary()).unwrap_or((None, None, None))
                        })
                        .collect();
                    let nan = f64::NAN;
                    push(
                        Derivation::Min,
                        format!("{}@min", f.name),
                        summaries.iter().map(|s| s.0.unwrap_or(nan)).collect(),
                    );
                    push(
                        Derivation::Max,
                        format!("{}@max", f.name),
                        summaries.iter().map(|s| s.1.unwrap_or(nan)).collect(),
                    );
                    push(
                        Derivation::Mean,
                        format!("{}@mean", f.name),
                        summaries.iter().map(|s| s.2.unwrap_or(nan)).collect(),
                    );
                }
                (_, FeatureKind::StaticCategorical) => {
                    let levels: Vec<String> = if f.levels.is_empty() {
                        episodes
                            .iter()
                            .filter_map(|e| e.category(&f.name))
                            .map(str::to_string)
                            .collect::<BTreeSet<_>>()
                            .into_iter()
                            .collect()
                    } else {
                        f.levels.clone()
                    };
                    if let Some(e) = episodes
                        .iter()
                        .find(|e| e.category(&f.name).is_some_and(|c| !levels.iter().any(|l| l == c)))
                    {
                        return Err(Error::input(format!(
                            "episode `{}`: undeclared level `{}` for `{}`",
                            e.episode_id,
                            e.category(&f.name).unwrap_or_default(),
                            f.name
                        )));
                    }
                    for level in levels {
                        let vals = episodes
                            .iter()
                            .map(|e| match e.category(&f.name) {
                                Some(c) => f64::from(u8::from(c == level)),
                                None => f64::NAN,
                            })
                            .collect();
                        push(Derivation::Level(level.clone()), format!("{}={level}", f.name), vals);
                    }
                }
                (_, FeatureKind::StaticNumeric | FeatureKind::BinaryFlag) => push(
                    Derivation::Value,
                    f.name.clone(),
                    episodes.iter().map(|e| e.number(&f.name).unwrap_or(f64::NAN)).collect(),
                ),
            }
        }
        let p = columns.len();
        let mut values = Array2::from_elem((n, p), f64::NAN);
        for (j, col) in data.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        Ok(RawColumns {
            columns,
            values,
            labels: episodes.iter().map(|e| e.label).collect(),
            tags: episodes.iter().map(|e| SubgroupTag { sex: e.sex, age: e.age }).collect(),
            episode_ids: episodes.iter().map(|e| e.episode_id.clone()).collect(),
            survival: episodes.iter().map(|e| e.survival_time).collect(),
        })
    }
}

/// Per-column imputation means and standardization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<String>,
    pub impute: Vec<f64>,
    pub standardization: Vec<Standardization>,
}

impl Preprocessor {
    /// Fits on `rows` of `raw`. Means come from observed entries only; the
    /// standard deviation is taken over the imputed column (n - 1).
    pub fn fit(raw: &RawColumns, rows: &[usize]) -> Result<Self> {
        let p = raw.columns.len();
        let mut impute = Vec::with_capacity(p);
        let mut standardization = Vec::with_capacity(p);
        for j in 0..p {
            let observed: Vec<f64> =
                rows.iter().map(|&i| raw.values[[i, j]]).filter(|v| !v.is_nan()).collect();
            if observed.is_empty() {
                return Err(Error::NoObservedValues(raw.columns[j].source.clone()));
            }
            let fill = observed.iter().sum::<f64>() / observed.len() as f64;
            let col: Vec<f64> = rows
                .iter()
                .map(|&i| {
                    let v = raw.values[[i, j]];
                    if v.is_nan() {
                        fill
                    } else {
                        v
                    }
                })
                .collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = crate::stats::sd(&col);
            impute.push(fill);
            standardization.push(Standardization { mean, sd });
        }
        Ok(Preprocessor {
            columns: raw.columns.iter().map(|c| c.name.clone()).collect(),
            impute,
            standardization,
        })
    }

    fn is_constant(s: &Standardization) -> bool {
        !(s.sd > 1e-12 * s.mean.abs().max(1.0))
    }

    pub fn transform(&self, raw: &RawColumns) -> Result<FeatureMatrix> {
        let names: Vec<&str> = raw.columns.iter().map(|c| c.name.as_str()).collect();
        if names != self.columns.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::ColumnMismatch(column_diff(&self.columns, &names)));
        }
        let (n, p) = raw.values.dim();
        let mut imputed = raw.values.clone();
        let mut rows = Array2::zeros((n, p));
        let mut columns = raw.columns.clone();
        for j in 0..p {
            let st = self.standardization[j];
            let constant = Self::is_constant(&st);
            let mut missing = 0usize;
            for i in 0..n {
                let mut v = imputed[[i, j]];
                if v.is_nan() {
                    v = self.impute[j];
                    imputed[[i, j]] = v;
                    missing += 1;
                }
                rows[[i, j]] = if constant { 0.0 } else { (v - st.mean) / st.sd };
            }
            columns[j].imputed_fraction = if n == 0 { 0.0 } else { missing as f64 / n as f64 };
            columns[j].constant = constant;
        }
        Ok(FeatureMatrix {
            columns,
            rows,
            raw: imputed,
            labels: raw.labels.clone(),
            tags: raw.tags.clone(),
            standardization: self.standardization.clone(),
            episode_ids: raw.episode_ids.clone(),
            survival: raw.survival.clone(),
        })
    }
}

pub(crate) fn column_diff(expected: &[String], found: &[&str]) -> String {
    let missing: Vec<&str> = expected.iter().map(String::as_str).filter(|c| !found.contains(c)).collect();
    let extra: Vec<&str> = found.iter().copied().filter(|c| !expected.iter().any(|e| e == c)).collect();
    if missing.is_empty() && extra.is_empty() {
        "same columns in a different order".to_string()
    } else {
        format!("missing [{}], unexpected [{}]", missing.join(", "), extra.join(", "))
    }
}

/// Standardized design matrix with column metadata and subgroup tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<ColumnDescriptor>,
    /// n x p standardized values fed to learners.
    pub rows: Array2<f64>,
    /// n x p imputed values in clinical units, for display.
    pub raw: Array2<f64>,
    pub labels: Vec<u8>,
    pub tags: Vec<SubgroupTag>,
    pub standardization: Vec<Standardization>,
    pub episode_ids: Vec<String>,
    pub survival: Vec<Option<f64>>,
}

/// Imputes and standardizes with statistics over the whole cohort.
pub fn build_matrix(episodes: &[RawEpisode], spec: &[FeatureSpec]) -> Result<FeatureMatrix> {
    if episodes.len() < 2 {
        return Err(Error::input("at least 2 episodes are required to build a matrix"));
    }
    let raw = RawColumns::extract(episodes, spec)?;
    let all: Vec<usize> = (0..episodes.len()).collect();
    Preprocessor::fit(&raw, &all)?.transform(&raw)
}

/// Imputes and standardizes with statistics from `fit_rows` only.
pub fn build_matrix_fitted_on(
    episodes: &[RawEpisode],
    spec: &[FeatureSpec],
    fit_rows: &[usize],
) -> Result<(FeatureMatrix, Preprocessor)> {
    if fit_rows.len() < 2 {
        return Err(Error::input("at least 2 fitting rows are required"));
    }
    let raw = RawColumns::extract(episodes, spec)?;
    let pre = Preprocessor::fit(&raw, fit_rows)?;
    Ok((pre.transform(&raw)?, pre))
}

impl FeatureMatrix {
    /// Wraps an already-numeric matrix; values are used as given (identity
    /// standardization) and columns are named `x0..x{p-1}` unless `names` is
    /// supplied.
    pub fn from_dense(rows: Array2<f64>, labels: Vec<u8>, names: Option<Vec<String>>) -> Self {
        let (n, p) = rows.dim();
        assert_eq!(labels.len(), n, "label count must match row count");
        let names = names.unwrap_or_else(|| (0..p).map(|j| format!("x{j}")).collect());
        assert_eq!(names.len(), p);
        let columns = names
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let col = rows.column(j);
                let first = col.first().copied().unwrap_or(0.0);
                ColumnDescriptor {
                    source: name.clone(),
                    name,
                    derivation: Derivation::Value,
                    imputed_fraction: 0.0,
                    constant: n > 0 && col.iter().all(|&v| v == first),
                }
            })
            .collect();
        FeatureMatrix {
            columns,
            raw: rows.clone(),
            rows,
            labels,
            tags: vec![SubgroupTag { sex: Sex::Female, age: f64::NAN }; n],
            standardization: vec![Standardization { mean: 0.0, sd: 1.0 }; p],
            episode_ids: (0..n).map(|i| i.to_string()).collect(),
            survival: vec![None; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn constant_mask(&self) -> Vec<bool> {
        self.columns.iter().map(|c| c.constant).collect()
    }

    /// Copy of the given rows, metadata included.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: self.rows.select(Axis(0), rows),
            raw: self.raw.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            tags: rows.iter().map(|&i| self.tags[i]).collect(),
            standardization: self.standardization.clone(),
            episode_ids: rows.iter().map(|&i| self.episode_ids[i].clone()).collect(),
            survival: rows.iter().map(|&i| self.survival[i]).collect(),
        }
    }

    /// Copy restricted to the given columns.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self.rows.select(Axis(1), cols),
            raw: self.raw.select(Axis(1), cols),
            labels: self.labels.clone(),
            tags: self.tags.clone(),
            standardization: cols.iter().map(|&j| self.standardization[j]).collect(),
            episode_ids: self.episode_ids.clone(),
            survival: self.survival.clone(),
        }
    }

    /// Maps standardized values back to the imputed clinical scale.
    pub fn destandardize(&self) -> Array2<f64> {
        let mut out = self.rows.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let st = self.standardization[j];
            if self.columns[j].constant {
                col.fill(st.mean);
            } else {
                col.mapv_inplace(|z| z * st.sd + st.mean);
            }
        }
        out
    }
}
