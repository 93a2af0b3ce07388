use serde::{Deserialize, Serialize};

use super::{attribute, sample_background, Attribution};
use crate::cohort::Sex;
use crate::cohort::{FeatureMatrix, SubgroupTag};
use crate::models::TrainedModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    /// Column index in the attribution.
    pub index: usize,
    /// Mean absolute Shapley value.
    pub importance: f64,
}

/// Features by descending mean |phi|; equal importances keep column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub n_rows: usize,
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceRanking {
    /// 1-based rank of `feature`.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature).map(|r| r + 1)
    }

    pub fn top(&self, k: usize) -> Vec<&str> {
        self.entries.iter().take(k).map(|e| e.feature.as_str()).collect()
    }

    pub fn importance_of(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.importance)
    }
}

pub fn feature_importance(attr: &Attribution) -> ImportanceRanking {
    let n = attr.n_rows();
    let mut entries: Vec<ImportanceEntry> = attr
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, f)| ImportanceEntry {
            feature: f.clone(),
            index: j,
            importance: if n == 0 {
                0.0
            } else {
                attr.values.column(j).iter().map(|v| v.abs()).sum::<f64>() / n as f64
            },
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.index.cmp(&b.index)));
    ImportanceRanking { n_rows: n, entries }
}

/// How rows are split into subgroups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Grouping {
    Sex,
    /// Age bins with the given interior edges; `[60, 75]` gives `<60`,
    /// `60-75` and `>=75`.
    AgeBins {
        edges: Vec<f64>,
    },
    /// Every sex by age-bin combination.
    SexAndAge {
        edges: Vec<f64>,
    },
    /// Named row sets.
    Custom {
        groups: Vec<(String, Vec<usize>)>,
    },
}

fn age_label(edges: &[f64], age: f64) -> String {
    let k = edges.iter().take_while(|&&e| age >= e).count();
    if k == 0 {
        format!("age<{}", edges[0])
    } else if k == edges.len() {
        format!("age>={}", edges[k - 1])
    } else {
        format!("age {}-{}", edges[k - 1], edges[k])
    }
}

fn age_labels(edges: &[f64]) -> Vec<String> {
    let mut out = vec![format!("age<{}", edges[0])];
    for w in edges.windows(2) {
        out.push(format!("age {}-{}", w[0], w[1]));
    }
    out.push(format!("age>={}", edges[edges.len() - 1]));
    out
}

impl Grouping {
    fn check(&self) -> Result<()> {
        if let Grouping::AgeBins { edges } | Grouping::SexAndAge { edges } = self {
            if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config("age bin edges must be non-empty and strictly increasing"));
            }
        }
        Ok(())
    }

    /// Named row sets in a fixed order; groups may be empty.
    pub fn assign(&self, tags: &[SubgroupTag]) -> Result<Vec<(String, Vec<usize>)>> {
        self.check()?;
        let by_label = |labels: Vec<String>, label_of: &dyn Fn(&SubgroupTag) -> String| {
            let mut groups: Vec<(String, Vec<usize>)> = labels.into_iter().map(|l| (l, Vec::new())).collect();
            for (i, t) in tags.iter().enumerate() {
                let l = label_of(t);
                if let Some(g) = groups.iter_mut().find(|g| g.0 == l) {
                    g.1.push(i);
                }
            }
            groups
        };
        Ok(match self {
            Grouping::Sex => by_label(vec!["female".into(), "male".into()], &|t| t.sex.to_string()),
            Grouping::AgeBins { edges } => by_label(age_labels(edges), &|t| age_label(edges, t.age)),
            Grouping::SexAndAge { edges } => {
                let labels = [Sex::Female, Sex::Male]
                    .iter()
                    .flat_map(|s| age_labels(edges).into_iter().map(move |a| format!("{s} {a}")))
                    .collect();
                by_label(labels, &|t| format!("{} {}", t.sex, age_label(edges, t.age)))
            }
            Grouping::Custom { groups } => {
                for (name, rows) in groups {
                    if let Some(&bad) = rows.iter().find(|&&i| i >= tags.len()) {
                        return Err(Error::input(format!(
                            "group `{name}` names row {bad} of {}",
                            tags.len()
                        )));
                    }
                }
                groups.clone()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRanking {
    pub group: String,
    pub n: usize,
    pub background_size: usize,
    pub ranking: ImportanceRanking,
    pub summary: SummaryData,
}

/// Importance within each group of rows of one attribution. Empty groups are
/// omitted with a warning.
pub fn subgroup_importance(
    attr: &Attribution,
    tags: &[SubgroupTag],
    grouping: &Grouping,
) -> Result<Vec<SubgroupRanking>> {
    if tags.len() != attr.n_rows() {
        return Err(Error::input(format!("{} tags for {} attributed rows", tags.len(), attr.n_rows())));
    }
    let mut out = Vec::new();
    for (group, rows) in grouping.assign(tags)? {
        if rows.is_empty() {
            log::warn!("subgroup `{group}` is empty; omitted");
            continue;
        }
        let sub = attr.select_rows(&rows);
        out.push(SubgroupRanking {
            group,
            n: rows.len(),
            background_size: attr.background.size,
            ranking: feature_importance(&sub),
            summary: summary_data(&sub, None),
        });
    }
    Ok(out)
}

/// Subgroup importance with group-matched references: the rows of each group
/// are attributed against a background sampled from the same group of
/// `pool`, so every group is explained relative to its own average patient.
/// With `by_source`, derived columns are summed per source feature.
pub fn subgroup_importance_matched(
    model: &TrainedModel,
    matrix: &FeatureMatrix,
    pool: &FeatureMatrix,
    grouping: &Grouping,
    background_size: usize,
    seed: u64,
    by_source: bool,
) -> Result<Vec<SubgroupRanking>> {
    let groups = grouping.assign(&matrix.tags)?;
    let pool_groups = match grouping {
        Grouping::Custom { .. } => None,
        _ => Some(grouping.assign(&pool.tags)?),
    };
    let mut out = Vec::new();
    for (k, (group, rows)) in groups.into_iter().enumerate() {
        let pool_rows: Vec<usize> = match &pool_groups {
            Some(g) => g[k].1.clone(),
            None => (0..pool.n_rows()).collect(),
        };
        if rows.is_empty() || pool_rows.is_empty() {
            log::warn!("subgroup `{group}` is empty; omitted");
            continue;
        }
        let background = sample_background(&pool.select_rows(&pool_rows), background_size, seed)?;
        let mut attr =
            attribute(model, &matrix.select_rows(&rows), &background, &format!("{group} background"))?;
        if by_source {
            attr = attr.group_by_source(&matrix.columns)?;
        }
        out.push(SubgroupRanking {
            group,
            n: rows.len(),
            background_size: background.n_rows(),
            ranking: feature_importance(&attr),
            summary: summary_data(&attr, None),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub row: String,
    pub phi: f64,
    /// Raw feature value min-max scaled to `[0, 1]`; 0.5 for a constant feature.
    pub color: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFeature {
    pub name: String,
    pub importance: f64,
    pub points: Vec<SummaryPoint>,
}

/// Per-feature point clouds ordered by importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryData {
    pub features: Vec<SummaryFeature>,
}

/// Summary-plot data for the `top_k` most important features (all if `None`).
pub fn summary_data(attr: &Attribution, top_k: Option<usize>) -> SummaryData {
    let ranking = feature_importance(attr);
    let k = top_k.unwrap_or(ranking.entries.len());
    let features = ranking
        .entries
        .iter()
        .take(k)
        .map(|e| {
            let col = attr.feature_values.column(e.index);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let points = (0..attr.n_rows())
                .map(|i| SummaryPoint {
                    row: attr.row_ids[i].clone(),
                    phi: attr.values[[i, e.index]],
                    color: if hi > lo { (col[i] - lo) / (hi - lo) } else { 0.5 },
                })
                .collect();
            SummaryFeature { name: e.feature.clone(), importance: e.importance, points }
        })
        .collect();
    SummaryData { features }
}
