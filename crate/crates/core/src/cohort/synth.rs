//! Seeded synthetic cohorts with planted ground-truth risk.
//!
//! Every episode is drawn independently from declared marginals. Mortality
//! follows a logistic model whose linear predictor is the sum of the planted
//! terms; the intercept is solved so the expected mortality over the drawn
//! cohort equals the configured base rate. The planted terms are returned as
//! [`SyntheticTruth`] for recovery tests.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution as _, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::episode::{DynamicValue, RawEpisode, Sex, StaticValue};
use super::spec::{ClinicalSet, FeatureKind, FeatureSpec};
use super::{BUILTIN_AGE, BUILTIN_LOS, BUILTIN_SEX};
use crate::stats::sigmoid;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMarginal {
    pub mean: f64,
    pub sd: f64,
    /// Mean for women when it differs from `mean`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub female_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    Normal(NumericMarginal),
    Bernoulli {
        prevalence: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        female_prevalence: Option<f64>,
    },
    Categorical {
        probabilities: Vec<f64>,
    },
}

fn default_measurements() -> [usize; 2] {
    [1, 4]
}

fn default_within_sd() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFeature {
    pub name: String,
    pub kind: FeatureKind,
    pub clinical_set: ClinicalSet,
    #[serde(default)]
    pub unit: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    pub marginal: Marginal,
    #[serde(default)]
    pub missing_rate: f64,
    /// Inclusive range of measurement counts per episode (dynamic only).
    #[serde(default = "default_measurements")]
    pub measurements: [usize; 2],
    /// Measurement noise around the patient value, as a fraction of `sd`.
    #[serde(default = "default_within_sd")]
    pub within_sd: f64,
}

impl SynthFeature {
    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            name: self.name.clone(),
            kind: self.kind,
            clinical_set: self.clinical_set,
            unit: self.unit.clone(),
            levels: self.levels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Increasing,
    Decreasing,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }
}

/// How a planted feature enters the linear predictor. `z` is the feature
/// standardized by its declared marginal (0/1 for flags and levels).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// `weight * sign * z`
    #[default]
    Linear,
    /// `weight * 1[sign * z > cut]`
    Threshold { cut: f64 },
    /// `weight * sign * z * z_with`, a pure interaction.
    Product { with: String },
}

/// Conjunction of optional conditions restricting where a term is active.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubgroupPredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_max: Option<f64>,
}

impl SubgroupPredicate {
    pub fn matches(&self, sex: Sex, age: f64) -> bool {
        self.sex.is_none_or(|s| s == sex)
            && self.age_min.is_none_or(|lo| age >= lo)
            && self.age_max.is_none_or(|hi| age < hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub feature: String,
    #[serde(default)]
    pub direction: Direction,
    pub weight: f64,
    #[serde(default)]
    pub shape: Shape,
    /// Category level, required when `feature` is categorical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup: Option<SubgroupPredicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    /// Exponential baseline hazard per day.
    pub baseline_hazard: f64,
    /// Administrative censoring horizon in days.
    pub horizon_days: f64,
}

fn default_female_fraction() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    #[serde(default = "default_female_fraction")]
    pub female_fraction: f64,
    pub age: NumericMarginal,
    pub los_days: NumericMarginal,
    pub base_rate: f64,
    #[serde(default)]
    pub features: Vec<SynthFeature>,
    #[serde(default)]
    pub planted: Vec<PlantedTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival: Option<SurvivalConfig>,
    /// Prepend `sex`, `age` and `los_days` to the emitted feature specs.
    #[serde(default = "default_true")]
    pub builtin_features: bool,
}

impl SynthConfig {
    /// Feature specs describing the generated cohort.
    pub fn specs(&self) -> Vec<FeatureSpec> {
        let mut out = Vec::new();
        if self.builtin_features {
            out.push(FeatureSpec::new(BUILTIN_SEX, FeatureKind::StaticCategorical, ClinicalSet::Demographic));
            out.push(
                FeatureSpec::new(BUILTIN_AGE, FeatureKind::StaticNumeric, ClinicalSet::Demographic)
                    .with_unit("years"),
            );
            out.push(
                FeatureSpec::new(BUILTIN_LOS, FeatureKind::StaticNumeric, ClinicalSet::Demographic)
                    .with_unit("days"),
            );
        }
        out.extend(self.features.iter().map(SynthFeature::spec));
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("synthetic cohort size must be positive"));
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(Error::config(format!("base rate {} outside (0, 1)", self.base_rate)));
        }
        if !(0.0..=1.0).contains(&self.female_fraction) {
            return Err(Error::config("female_fraction outside [0, 1]"));
        }
        super::spec::validate_specs(&self.specs())?;
        for f in &self.features {
            let ok = matches!(
                (&f.marginal, f.kind),
                (Marginal::Normal(_), FeatureKind::StaticNumeric | FeatureKind::DynamicNumeric)
                    | (Marginal::Bernoulli { .. }, FeatureKind::BinaryFlag)
                    | (Marginal::Categorical { .. }, FeatureKind::StaticCategorical)
            );
            if !ok {
                return Err(Error::config(format!("marginal of `{}` does not fit its kind", f.name)));
            }
            if let Marginal::Categorical { probabilities } = &f.marginal {
                if probabilities.len() != f.levels.len() || probabilities.is_empty() {
                    return Err(Error::config(format!("`{}`: one probability per level required", f.name)));
                }
            }
            if f.measurements[0] == 0 || f.measurements[0] > f.measurements[1] {
                return Err(Error::config(format!("`{}`: invalid measurement count range", f.name)));
            }
        }
        for t in &self.planted {
            let names = std::iter::once(&t.feature).chain(match &t.shape {
                Shape::Product { with } => Some(with),
                _ => None,
            });
            for name in names {
                if name != BUILTIN_AGE && !self.features.iter().any(|f| &f.name == name) {
                    return Err(Error::config(format!("planted weight on undeclared feature `{name}`")));
                }
            }
            let feature = self.features.iter().find(|f| f.name == t.feature);
            if let Some(f) = feature.filter(|f| f.kind == FeatureKind::StaticCategorical) {
                match &t.level {
                    Some(l) if f.levels.contains(l) => {}
                    _ => {
                        return Err(Error::config(format!(
                            "planted term on `{}` needs a declared level",
                            f.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Planted risk structure recorded alongside a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub base_rate: f64,
    /// Solved intercept of the logistic outcome model.
    pub intercept: f64,
    pub terms: Vec<PlantedTerm>,
    /// Per-feature `(mean, sd)` used to standardize planted features.
    pub standardization: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub episodes: Vec<RawEpisode>,
    pub truth: SyntheticTruth,
    /// True mortality probability of every episode.
    pub probabilities: Vec<f64>,
    pub specs: Vec<FeatureSpec>,
}

fn draw_normal(m: &NumericMarginal, sex: Sex, rng: &mut rng::Rng) -> f64 {
    let mu = match sex {
        Sex::Female => m.female_mean.unwrap_or(m.mean),
        Sex::Male => m.mean,
    };
    let v = if m.sd > 0.0 { Normal::new(mu, m.sd).unwrap().sample(rng) } else { mu };
    v.clamp(m.min.unwrap_or(f64::NEG_INFINITY), m.max.unwrap_or(f64::INFINITY))
}

fn draw_lognormal(m: &NumericMarginal, rng: &mut rng::Rng) -> f64 {
    let s2 = (1.0 + (m.sd / m.mean).powi(2)).ln();
    let v = LogNormal::new(m.mean.ln() - s2 / 2.0, s2.sqrt()).unwrap().sample(rng);
    v.clamp(m.min.unwrap_or(f64::MIN_POSITIVE), m.max.unwrap_or(f64::INFINITY))
}

/// Patient-level truth for one feature before measurement noise/missingness.
#[derive(Debug, Clone)]
enum Latent {
    Number(f64),
    Level(usize),
}

/// Draws a cohort. Identical `(config, seed)` pairs give identical output.
pub fn synth_cohort(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let mut draw = rng::stream(seed, "synth");
    let mut episodes = Vec::with_capacity(config.n);
    let mut latents: Vec<Vec<Latent>> = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let sex = if draw.random::<f64>() < config.female_fraction { Sex::Female } else { Sex::Male };
        let age = draw_normal(&config.age, sex, &mut draw);
        let los = draw_lognormal(&config.los_days, &mut draw);
        let mut ep = RawEpisode::new(format!("ep{i:06}"), sex, age, los, 0);
        let mut lat = Vec::with_capacity(config.features.len());
        for f in &config.features {
            let missing = draw.random::<f64>() < f.missing_rate;
            match &f.marginal {
                Marginal::Normal(m) => {
                    let v = draw_normal(m, sex, &mut draw);
                    lat.push(Latent::Number(v));
                    if f.kind == FeatureKind::DynamicNumeric {
                        let k = draw.random_range(f.measurements[0]..=f.measurements[1]);
                        let mut t = draw.random_range(0.0..6.0);
                        let mut series = Vec::with_capacity(k);
                        for _ in 0..k {
                            let noise = if f.within_sd > 0.0 {
                                Normal::new(0.0, f.within_sd * m.sd).unwrap().sample(&mut draw)
                            } else {
                                0.0
                            };
                            let x = (v + noise)
                                .clamp(m.min.unwrap_or(f64::NEG_INFINITY), m.max.unwrap_or(f64::INFINITY));
                            series.push((t, x));
                            t += draw.random_range(0.5..12.0);
                        }
                        if !missing {
                            ep.dynamic_values.insert(f.name.clone(), DynamicValue::Series(series));
                        }
                    } else if !missing {
                        ep.static_values.insert(f.name.clone(), StaticValue::Number(v));
                    }
                }
                Marginal::Bernoulli { prevalence, female_prevalence } => {
                    let p = match sex {
                        Sex::Female => female_prevalence.unwrap_or(*prevalence),
                        Sex::Male => *prevalence,
                    };
                    let v = f64::from(u8::from(draw.random::<f64>() < p));
                    lat.push(Latent::Number(v));
                    if !missing {
                        ep.static_values.insert(f.name.clone(), StaticValue::Number(v));
                    }
                }
                Marginal::Categorical { probabilities } => {
                    let total: f64 = probabilities.iter().sum();
                    let mut u = draw.random::<f64>() * total;
                    let mut level = probabilities.len() - 1;
                    for (k, p) in probabilities.iter().enumerate() {
                        if u < *p {
                            level = k;
                            break;
                        }
                        u -= p;
                    }
                    lat.push(Latent::Level(level));
                    if !missing {
                        ep.static_values
                            .insert(f.name.clone(), StaticValue::Category(f.levels[level].clone()));
                    }
                }
            }
        }
        episodes.push(ep);
        latents.push(lat);
    }

    let mut standardization = BTreeMap::new();
    standardization.insert(BUILTIN_AGE.to_string(), (config.age.mean, config.age.sd));
    for f in &config.features {
        if let Marginal::Normal(m) = &f.marginal {
            standardization.insert(f.name.clone(), (m.mean, m.sd));
        }
    }
    let signal = |ep: &RawEpisode, lat: &[Latent], name: &str, level: Option<&str>| -> f64 {
        if name == BUILTIN_AGE {
            let (m, s) = standardization[BUILTIN_AGE];
            return (ep.age - m) / s;
        }
        let j = config.features.iter().position(|f| f.name == name).unwrap();
        match (&lat[j], &config.features[j].marginal) {
            (Latent::Number(v), Marginal::Normal(m)) => (v - m.mean) / m.sd,
            (Latent::Number(v), _) => *v,
            (Latent::Level(k), _) => {
                f64::from(u8::from(level.is_some_and(|l| config.features[j].levels[*k] == l)))
            }
        }
    };
    let scores: Vec<f64> = episodes
        .iter()
        .zip(&latents)
        .map(|(ep, lat)| {
            config
                .planted
                .iter()
                .filter(|t| t.subgroup.as_ref().is_none_or(|g| g.matches(ep.sex, ep.age)))
                .map(|t| {
                    let z = signal(ep, lat, &t.feature, t.level.as_deref());
                    let s = t.direction.sign();
                    match &t.shape {
                        Shape::Linear => t.weight * s * z,
                        Shape::Threshold { cut } => t.weight * f64::from(u8::from(s * z > *cut)),
                        Shape::Product { with } => t.weight * s * z * signal(ep, lat, with, None),
                    }
                })
                .sum()
        })
        .collect();

    let intercept = solve_intercept(&scores, config.base_rate);
    let probabilities: Vec<f64> = scores.iter().map(|s| sigmoid(intercept + s)).collect();
    let mut labels = rng::stream(seed, "labels");
    let mut surv = rng::stream(seed, "survival");
    for ((ep, p), s) in episodes.iter_mut().zip(&probabilities).zip(&scores) {
        ep.label = u8::from(labels.random::<f64>() < *p);
        if let Some(sc) = &config.survival {
            let u: f64 = surv.random();
            ep.survival_time = Some(if ep.label == 1 {
                let rate = sc.baseline_hazard * s.exp();
                -(1.0 - u * (1.0 - (-rate * sc.horizon_days).exp())).ln() / rate
            } else {
                sc.horizon_days
            });
        }
    }
    Ok(SynthOutput {
        episodes,
        truth: SyntheticTruth {
            seed,
            base_rate: config.base_rate,
            intercept,
            terms: config.planted.clone(),
            standardization,
        },
        probabilities,
        specs: config.specs(),
    })
}

/// Intercept `b` with `mean(sigmoid(b + s_i)) = rate`, by bisection.
fn solve_intercept(scores: &[f64], rate: f64) -> f64 {
    let expected = |b: f64| scores.iter().map(|s| sigmoid(b + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
