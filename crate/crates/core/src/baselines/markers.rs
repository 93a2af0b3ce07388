//! Side-by-side grid of SHAP importance and Cox significance per subgroup.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CoxFit;
use crate::shap::ImportanceRanking;
use crate::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;

/// Subgroup column of the grid, e.g. women with STEMI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupKey {
    pub sex: String,
    pub diagnosis: String,
}

impl SubgroupKey {
    pub fn new(sex: &str, diagnosis: &str) -> Self {
        SubgroupKey { sex: sex.into(), diagnosis: diagnosis.into() }
    }

    fn label(&self) -> String {
        if self.diagnosis.is_empty() {
            self.sex.clone()
        } else {
            format!("{} {}", self.diagnosis, self.sex)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerCell {
    pub mean_abs_shap: Option<f64>,
    pub cox_p: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerRow {
    pub marker: String,
    /// One cell per entry of [`MarkerComparison::groups`].
    pub cells: Vec<MarkerCell>,
    /// Set when the marker is missing from one source in some subgroup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerComparison {
    pub groups: Vec<SubgroupKey>,
    pub rows: Vec<MarkerRow>,
}

/// Joins per-subgroup importances and Cox fits on marker name. Both slices
/// must list the same subgroups in the same order. A marker missing from
/// either source keeps its row with the gap flagged.
pub fn compare_markers(
    shap: &[(SubgroupKey, ImportanceRanking)],
    cox: &[(SubgroupKey, CoxFit)],
    markers: &[String],
) -> Result<MarkerComparison> {
    if shap.len() != cox.len() || shap.iter().zip(cox).any(|(a, b)| a.0 != b.0) {
        return Err(Error::input("SHAP and Cox results must cover the same subgroups in the same order"));
    }
    let groups: Vec<SubgroupKey> = shap.iter().map(|(k, _)| k.clone()).collect();
    let rows = markers
        .iter()
        .map(|m| {
            let mut missing = Vec::new();
            let cells = shap
                .iter()
                .zip(cox)
                .map(|((key, ranking), (_, fit))| {
                    let mean_abs_shap = ranking.importance_of(m);
                    let cox_p = fit.p_value(m).filter(|p| p.is_finite());
                    if mean_abs_shap.is_none() {
                        missing.push(format!("no SHAP value in {}", key.label()));
                    }
                    if cox_p.is_none() {
                        missing.push(format!("no Cox estimate in {}", key.label()));
                    }
                    MarkerCell { mean_abs_shap, cox_p, significant: cox_p.is_some_and(|p| p < SIGNIFICANCE) }
                })
                .collect();
            MarkerRow { marker: m.clone(), cells, flag: (!missing.is_empty()).then(|| missing.join("; ")) }
        })
        .collect();
    Ok(MarkerComparison { groups, rows })
}

/// `<0.005*` below 0.005, otherwise three decimals, starred below 0.05.
pub fn format_p(p: Option<f64>) -> String {
    match p {
        None => "NA".into(),
        Some(p) if p < 0.005 => "<0.005*".into(),
        Some(p) => format!("{p:.3}{}", if p < SIGNIFICANCE { "*" } else { "" }),
    }
}

fn format_shap(v: Option<f64>) -> String {
    v.map_or("NA".into(), |v| format!("{v:.2}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl MarkerComparison {
    /// Long format: one line per marker and subgroup.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("marker,diagnosis,sex,mean_abs_shap,cox_p,significant,flag\n");
        for r in &self.rows {
            for (g, c) in self.groups.iter().zip(&r.cells) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    csv_field(&r.marker),
                    csv_field(&g.diagnosis),
                    csv_field(&g.sex),
                    c.mean_abs_shap.map_or(String::new(), |v| v.to_string()),
                    c.cox_p.map_or(String::new(), |v| v.to_string()),
                    c.significant,
                    csv_field(r.flag.as_deref().unwrap_or(""))
                );
            }
        }
        out
    }

    /// Marker rows against SHAP and p columns for each subgroup.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Marker |");
        let mut rule = String::from("|---|");
        for g in &self.groups {
            let _ = write!(out, " {} SHAP | {} p |", g.label(), g.label());
            rule.push_str("---:|---:|");
        }
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for r in &self.rows {
            let name = if r.flag.is_some() { format!("{} (one-sided)", r.marker) } else { r.marker.clone() };
            let _ = write!(out, "| {name} |");
            for c in &r.cells {
                let _ = write!(out, " {} | {} |", format_shap(c.mean_abs_shap), format_p(c.cox_p));
            }
            out.push('\n');
        }
        out
    }
}

/// The `k` highest-ranked markers; the default Cox covariate set uses 10.
pub fn top_markers(ranking: &ImportanceRanking, k: usize) -> Vec<String> {
    ranking.top(k).into_iter().map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(Some(0.001)), "<0.005*");
        assert_eq!(format_p(Some(0.03)), "0.030*");
        assert_eq!(format_p(Some(0.05)), "0.050");
        assert_eq!(format_p(None), "NA");
    }
}
