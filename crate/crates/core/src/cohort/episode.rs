use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            other => Err(format!("expected `female` or `male`, found `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StaticValue {
    Category(String),
    Number(f64),
}

/// Measurements of a time-varying feature during one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DynamicValue {
    /// `(timestamp, value)` pairs with non-decreasing timestamps.
    Series(Vec<(f64, f64)>),
    /// Pre-aggregated summary as found in wide CSV files; each part may be
    /// missing independently.
    Aggregate { min: Option<f64>, max: Option<f64>, mean: Option<f64> },
}

impl DynamicValue {
    /// `(min, max, mean)`; only the multiset of values matters.
    pub fn summary(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        match self {
            DynamicValue::Series(points) => {
                if points.is_empty() {
                    return (None, None, None);
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut sum = 0.0;
                for &(_, v) in points {
                    lo = lo.min(v);
                    hi = hi.max(v);
                    sum += v;
                }
                (Some(lo), Some(hi), Some(sum / points.len() as f64))
            }
            DynamicValue::Aggregate { min, max, mean } => (*min, *max, *mean),
        }
    }
}

/// One hospital episode as read from the cohort file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEpisode {
    pub episode_id: String,
    pub sex: Sex,
    pub age: f64,
    pub length_of_stay: f64,
    /// 0 = survived, 1 = died.
    pub label: u8,
    pub survival_time: Option<f64>,
    pub static_values: BTreeMap<String, StaticValue>,
    pub dynamic_values: BTreeMap<String, DynamicValue>,
}

impl RawEpisode {
    pub fn new(episode_id: impl Into<String>, sex: Sex, age: f64, length_of_stay: f64, label: u8) -> Self {
        RawEpisode {
            episode_id: episode_id.into(),
            sex,
            age,
            length_of_stay,
            label,
            survival_time: None,
            static_values: BTreeMap::new(),
            dynamic_values: BTreeMap::new(),
        }
    }

    /// Numeric value of a static or binary feature, if present.
    pub fn number(&self, name: &str) -> Option<f64> {
        match self.static_values.get(name) {
            Some(StaticValue::Number(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn category(&self, name: &str) -> Option<&str> {
        match self.static_values.get(name) {
            Some(StaticValue::Category(c)) => Some(c.as_str()),
            _ => None,
        }
    }
}
