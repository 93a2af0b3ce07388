use serde::{Deserialize, Serialize};

use super::bootstrap::bootstrap_auc_ci;
use super::delong::{delong_test, DelongResult};
use super::mcnemar::{mcnemar_test, McNemarResult};
use super::roc::{roc_curve, sens_spec, youden_threshold, RocCurve};
use crate::stats::{mean, sd};
use crate::svg::{num, Svg};
use crate::{Error, Result};

/// Scores of one classifier: `rank` orders rows for ROC analysis and
/// `calibrated` (probabilities, points) is thresholded for confusion counts.
/// The two must order rows identically.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub rank: Vec<f64>,
    pub calibrated: Vec<f64>,
}

impl ScoreSet {
    pub fn same(scores: Vec<f64>) -> Self {
        ScoreSet { calibrated: scores.clone(), rank: scores }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub rule: String,
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl OperatingPoint {
    fn youden(scores: &ScoreSet, labels: &[u8]) -> Result<Self> {
        let curve = roc_curve(&scores.calibrated, labels)?;
        let threshold = youden_threshold(&curve);
        let (sensitivity, specificity) = sens_spec(&scores.calibrated, labels, threshold)?;
        Ok(OperatingPoint { rule: "youden".into(), threshold, sensitivity, specificity })
    }

    fn predictions(&self, scores: &ScoreSet) -> Vec<u8> {
        scores.calibrated.iter().map(|&s| u8::from(s >= self.threshold)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub fold_aucs: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// `mean ± sd` to two decimals.
    pub formatted: String,
}

impl CvSummary {
    pub fn new(fold_aucs: Vec<f64>) -> Self {
        let (m, s) = (mean(&fold_aucs), sd(&fold_aucs));
        CvSummary { formatted: format!("{m:.2} ± {s:.2}"), fold_aucs, mean: m, sd: s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub auc: f64,
    pub operating_point: OperatingPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delong: Option<DelongResult>,
    /// Why the DeLong test is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delong_note: Option<String>,
    pub mcnemar: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_positive: usize,
    pub auc: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_method: String,
    pub operating_point: OperatingPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_validation: Option<CvSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    pub fn new(scores: &ScoreSet, labels: &[u8], n_boot: usize, seed: u64) -> Result<Self> {
        if scores.rank.len() != labels.len() || scores.calibrated.len() != labels.len() {
            return Err(Error::input("scores and labels differ in length"));
        }
        let auc = roc_curve(&scores.rank, labels)?.auc;
        let (lo, hi) = bootstrap_auc_ci(&scores.rank, labels, n_boot, seed)?;
        Ok(EvalReport {
            n: labels.len(),
            n_positive: labels.iter().filter(|&&y| y == 1).count(),
            auc,
            // Percentile intervals can exclude the point estimate on tiny or
            // skewed samples; widen to contain it.
            ci_lower: lo.min(auc),
            ci_upper: hi.max(auc),
            ci_method: format!("stratified percentile bootstrap, {n_boot} resamples, 2.5/97.5 percentiles"),
            operating_point: OperatingPoint::youden(scores, labels)?,
            cross_validation: None,
            comparisons: Vec::new(),
        })
    }

    pub fn with_cv(mut self, fold_aucs: Vec<f64>) -> Self {
        self.cross_validation = Some(CvSummary::new(fold_aucs));
        self
    }

    /// Adds a paired comparison of `own` against `other` on the same rows.
    pub fn compare(
        &mut self,
        name: &str,
        own: &ScoreSet,
        other: &ScoreSet,
        labels: &[u8],
    ) -> Result<&Comparison> {
        let auc = roc_curve(&other.rank, labels)?.auc;
        let op = OperatingPoint::youden(other, labels)?;
        let (delong, delong_note) = match delong_test(&own.rank, &other.rank, labels) {
            Ok(d) => (Some(d), None),
            Err(e @ Error::DegenerateVariance(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let mcnemar = mcnemar_test(&self.operating_point.predictions(own), &op.predictions(other), labels)?;
        self.comparisons.push(Comparison {
            name: name.to_string(),
            auc,
            operating_point: op,
            delong,
            delong_note,
            mcnemar,
        });
        Ok(self.comparisons.last().expect("just pushed"))
    }
}

const PALETTE: [&str; 4] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad"];

/// ROC curves on shared axes with an AUC legend.
pub fn roc_svg(curves: &[(&str, &RocCurve)], comment: &str) -> String {
    let (w, h, m) = (420.0, 420.0, 50.0);
    let side = w - 2.0 * m;
    let px = |fpr: f64| m + fpr * side;
    let py = |tpr: f64| h - m - tpr * side;
    let mut svg = Svg::new(w, h);
    svg.line(m, h - m, w - m, h - m, "black", 1.0);
    svg.line(m, h - m, m, m, "black", 1.0);
    svg.dashed_line(px(0.0), py(0.0), px(1.0), py(1.0), "#999999");
    for k in 0..=4 {
        let t = f64::from(k) / 4.0;
        svg.text(px(t), h - m + 16.0, 10.0, "middle", &format!("{t:.2}"));
        svg.text(m - 6.0, py(t) + 3.0, 10.0, "end", &format!("{t:.2}"));
    }
    svg.text(w / 2.0, h - 10.0, 12.0, "middle", "False positive rate");
    svg.text(14.0, h / 2.0, 12.0, "middle", "TPR");
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (px(p.fpr), py(p.tpr))).collect();
        svg.polyline(&pts, color, 2.0);
        let y = py(0.0) - 12.0 - 16.0 * (curves.len() - 1 - i) as f64;
        svg.rect(px(0.55), y - 8.0, 12.0, 4.0, color);
        svg.text(
            px(0.55) + 16.0,
            y - 3.0,
            11.0,
            "start",
            &format!("{name} (AUC = {})", &num(curve.auc)[..5]),
        );
    }
    svg.finish(comment)
}
