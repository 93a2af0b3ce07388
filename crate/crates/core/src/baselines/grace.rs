//! GRACE in-hospital mortality point score.
//!
//! Points come from a versioned JSON table rather than code. The shipped
//! table is the in-hospital death nomogram of Granger et al. (2003); any
//! table with the same shape can be loaded instead.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{DynamicValue, RawEpisode, StaticValue};
use crate::eval::{EvalReport, ScoreSet};
use crate::{Error, Result};

const SHIPPED: &str = include_str!("../../data/grace_granger2003.json");

/// Half-open band `[lower, upper)`; `upper: None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: Option<f64>,
    pub points: u32,
}

impl Band {
    fn contains(&self, v: f64) -> bool {
        v >= self.lower && self.upper.is_none_or(|u| v < u)
    }

    fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("[{}, {})", self.lower, u),
            None => format!(">= {}", self.lower),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMarker {
    pub unit: String,
    /// Declared monotonicity of points in the marker value.
    pub direction: Direction,
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMarkers {
    pub age: NumericMarker,
    pub heart_rate: NumericMarker,
    pub sbp: NumericMarker,
    pub creatinine: NumericMarker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct KillipPoints {
    pub I: u32,
    pub II: u32,
    pub III: u32,
    pub IV: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagPoints {
    pub cardiac_arrest: u32,
    pub st_deviation: u32,
    pub elevated_enzymes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GracePointTable {
    pub version: String,
    pub source: String,
    pub numeric: NumericMarkers,
    pub killip: KillipPoints,
    pub flags: FlagPoints,
}

impl GracePointTable {
    /// The table shipped with the crate.
    pub fn granger2003() -> Self {
        Self::from_json(SHIPPED).expect("shipped GRACE table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: GracePointTable =
            serde_json::from_str(text).map_err(|e| Error::Grace(format!("malformed point table: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn numeric_markers(&self) -> [(&'static str, &NumericMarker); 4] {
        let n = &self.numeric;
        [("age", &n.age), ("heart_rate", &n.heart_rate), ("sbp", &n.sbp), ("creatinine", &n.creatinine)]
    }

    /// Bands must start at 0, tile `[0, inf)` without gaps or overlaps and
    /// be monotone in the declared direction; Killip points must be
    /// non-decreasing from I to IV.
    pub fn validate(&self) -> Result<()> {
        for (name, m) in self.numeric_markers() {
            let bad = |msg: String| Err(Error::Grace(format!("marker `{name}`: {msg}")));
            let Some(first) = m.bands.first() else {
                return bad("no bands".into());
            };
            if first.lower != 0.0 {
                return bad(format!("first band starts at {} instead of 0", first.lower));
            }
            for (k, b) in m.bands.iter().enumerate() {
                if !b.lower.is_finite() {
                    return bad(format!("band {k} has a non-finite lower bound"));
                }
                let last = k + 1 == m.bands.len();
                match (b.upper, last) {
                    (None, true) => {}
                    (None, false) => return bad(format!("band {k} is unbounded but not last")),
                    (Some(_), true) => return bad("last band must be unbounded".into()),
                    (Some(u), false) => {
                        if !(u > b.lower) {
                            return bad(format!("band {k} is empty or inverted"));
                        }
                        let next = &m.bands[k + 1];
                        if next.lower != u {
                            return bad(format!("gap or overlap between bands {k} and {}", k + 1));
                        }
                        let ok = match m.direction {
                            Direction::Increasing => next.points >= b.points,
                            Direction::Decreasing => next.points <= b.points,
                        };
                        if !ok {
                            return bad(format!("points not monotone between bands {k} and {}", k + 1));
                        }
                    }
                }
            }
        }
        let k = &self.killip;
        if !(k.I <= k.II && k.II <= k.III && k.III <= k.IV) {
            return Err(Error::Grace("Killip points must be non-decreasing from I to IV".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Killip {
    I,
    II,
    III,
    IV,
}

impl fmt::Display for Killip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Killip::I => "I",
            Killip::II => "II",
            Killip::III => "III",
            Killip::IV => "IV",
        })
    }
}

impl FromStr for Killip {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Killip::I),
            "II" | "2" => Ok(Killip::II),
            "III" | "3" => Ok(Killip::III),
            "IV" | "4" => Ok(Killip::IV),
            other => Err(Error::Grace(format!("unknown Killip class `{other}`"))),
        }
    }
}

/// The eight GRACE markers for one patient. `None` marks a missing value;
/// the score has no imputation, so scoring such an input fails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GraceInput {
    pub age: Option<f64>,
    pub heart_rate: Option<f64>,
    pub sbp: Option<f64>,
    /// mg/dL.
    pub creatinine: Option<f64>,
    pub killip: Option<Killip>,
    pub cardiac_arrest: Option<bool>,
    pub st_deviation: Option<bool>,
    pub elevated_enzymes: Option<bool>,
}

/// Cohort column names holding each GRACE marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraceColumns {
    pub heart_rate: String,
    pub sbp: String,
    pub creatinine: String,
    pub killip: String,
    pub cardiac_arrest: String,
    pub st_deviation: String,
    pub elevated_enzymes: String,
}

impl Default for GraceColumns {
    fn default() -> Self {
        GraceColumns {
            heart_rate: "heart_rate".into(),
            sbp: "sbp".into(),
            creatinine: "creatinine".into(),
            killip: "killip".into(),
            cardiac_arrest: "cardiac_arrest".into(),
            st_deviation: "st_deviation".into(),
            elevated_enzymes: "elevated_enzymes".into(),
        }
    }
}

impl GraceInput {
    /// Reads the markers from an episode. Time-varying markers use the first
    /// measurement (the admission value), or the mean of a pre-aggregated
    /// column. Age comes from the episode itself.
    pub fn from_episode(episode: &RawEpisode, columns: &GraceColumns) -> Self {
        let numeric = |name: &str| -> Option<f64> {
            if let Some(StaticValue::Number(v)) = episode.static_values.get(name) {
                return Some(*v);
            }
            match episode.dynamic_values.get(name)? {
                DynamicValue::Series(points) => points.first().map(|p| p.1),
                DynamicValue::Aggregate { mean, .. } => *mean,
            }
        };
        let flag = |name: &str| numeric(name).map(|v| v > 0.5);
        let killip = match episode.static_values.get(&columns.killip) {
            Some(StaticValue::Category(c)) => c.parse().ok(),
            Some(StaticValue::Number(v)) => v.to_string().parse().ok(),
            None => None,
        };
        GraceInput {
            age: Some(episode.age),
            heart_rate: numeric(&columns.heart_rate),
            sbp: numeric(&columns.sbp),
            creatinine: numeric(&columns.creatinine),
            killip,
            cardiac_arrest: flag(&columns.cardiac_arrest),
            st_deviation: flag(&columns.st_deviation),
            elevated_enzymes: flag(&columns.elevated_enzymes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraceComponent {
    pub marker: String,
    pub value: String,
    pub band: String,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraceScore {
    pub total: u32,
    pub breakdown: Vec<GraceComponent>,
}

fn band_points(name: &str, marker: &NumericMarker, value: Option<f64>) -> Result<GraceComponent> {
    let v = value.ok_or_else(|| Error::Grace(format!("missing marker `{name}`")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Grace(format!("marker `{name}` value {v} must be finite and non-negative")));
    }
    let band = marker
        .bands
        .iter()
        .find(|b| b.contains(v))
        .ok_or_else(|| Error::Grace(format!("marker `{name}` value {v} is outside every band")))?;
    Ok(GraceComponent { marker: name.into(), value: v.to_string(), band: band.label(), points: band.points })
}

fn flag_points(name: &str, points: u32, value: Option<bool>) -> Result<GraceComponent> {
    let v = value.ok_or_else(|| Error::Grace(format!("missing marker `{name}`")))?;
    Ok(GraceComponent {
        marker: name.into(),
        value: if v { "yes" } else { "no" }.into(),
        band: if v { "present" } else { "absent" }.into(),
        points: if v { points } else { 0 },
    })
}

/// Total points and the band each marker fell in.
pub fn grace_score(input: &GraceInput, table: &GracePointTable) -> Result<GraceScore> {
    let n = &table.numeric;
    let killip = input.killip.ok_or_else(|| Error::Grace("missing marker `killip`".into()))?;
    let k = &table.killip;
    let killip_points = match killip {
        Killip::I => k.I,
        Killip::II => k.II,
        Killip::III => k.III,
        Killip::IV => k.IV,
    };
    let breakdown = vec![
        band_points("age", &n.age, input.age)?,
        band_points("heart_rate", &n.heart_rate, input.heart_rate)?,
        band_points("sbp", &n.sbp, input.sbp)?,
        band_points("creatinine", &n.creatinine, input.creatinine)?,
        GraceComponent {
            marker: "killip".into(),
            value: killip.to_string(),
            band: killip.to_string(),
            points: killip_points,
        },
        flag_points("cardiac_arrest", table.flags.cardiac_arrest, input.cardiac_arrest)?,
        flag_points("st_deviation", table.flags.st_deviation, input.st_deviation)?,
        flag_points("elevated_enzymes", table.flags.elevated_enzymes, input.elevated_enzymes)?,
    ];
    Ok(GraceScore { total: breakdown.iter().map(|c| c.points).sum(), breakdown })
}

/// Totals for many patients; the first failing patient aborts with its index.
pub fn grace_totals(inputs: &[GraceInput], table: &GracePointTable) -> Result<Vec<f64>> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            grace_score(x, table).map(|s| f64::from(s.total)).map_err(|e| {
                Error::Grace(format!("patient {i}: {}", e.to_string().trim_start_matches("GRACE: ")))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraceEvaluation {
    pub table_version: String,
    pub scores: Vec<f64>,
    pub report: EvalReport,
}

/// Scores every patient and evaluates the totals as a risk score. Compare
/// against a model with [`EvalReport::compare`] on the same rows.
pub fn grace_eval(
    inputs: &[GraceInput],
    labels: &[u8],
    table: &GracePointTable,
    n_boot: usize,
    seed: u64,
) -> Result<GraceEvaluation> {
    if inputs.len() != labels.len() {
        return Err(Error::input("GRACE inputs and labels differ in length"));
    }
    let scores = grace_totals(inputs, table)?;
    let report = EvalReport::new(&ScoreSet::same(scores.clone()), labels, n_boot, seed)?;
    Ok(GraceEvaluation { table_version: table.version.clone(), scores, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> GraceInput {
        GraceInput {
            age: Some(65.0),
            heart_rate: Some(95.0),
            sbp: Some(130.0),
            creatinine: Some(1.3),
            killip: Some(Killip::II),
            cardiac_arrest: Some(false),
            st_deviation: Some(true),
            elevated_enzymes: Some(true),
        }
    }

    #[test]
    fn shipped_table_validates() {
        let t = GracePointTable::granger2003();
        assert_eq!(t.version, "granger2003-inhospital-v1");
    }

    #[test]
    fn gap_is_rejected() {
        let text = SHIPPED.replacen(r#"{"lower": 30, "upper": 40"#, r#"{"lower": 31, "upper": 40"#, 1);
        let err = GracePointTable::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("age") && err.contains("gap"), "{err}");
    }

    #[test]
    fn missing_marker_named() {
        let mut x = profile();
        x.sbp = None;
        let err = grace_score(&x, &GracePointTable::granger2003()).unwrap_err().to_string();
        assert!(err.contains("sbp"), "{err}");
    }

    #[test]
    fn negative_value_rejected() {
        let mut x = profile();
        x.heart_rate = Some(-3.0);
        let err = grace_score(&x, &GracePointTable::granger2003()).unwrap_err().to_string();
        assert!(err.contains("heart_rate") && err.contains("-3"), "{err}");
    }

    #[test]
    fn band_edges_are_half_open() {
        let t = GracePointTable::granger2003();
        let mut x = profile();
        x.age = Some(70.0);
        let at = grace_score(&x, &t).unwrap();
        x.age = Some(69.999);
        let below = grace_score(&x, &t).unwrap();
        assert_eq!(at.total - below.total, 75 - 58);
    }
}
