//! Table-1 style cohort statistics split by sex.

use serde::{Deserialize, Serialize};

use super::episode::{RawEpisode, Sex, StaticValue};
use super::spec::{FeatureKind, FeatureSpec};
use super::{BUILTIN_AGE, BUILTIN_LOS, BUILTIN_SEX};
use crate::stats::{chi_square_independence, mean, sd, welch_t_test, TestOutcome};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Count {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: String,
    pub total: Count,
    pub female: Count,
    pub male: Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Continuous { total: MeanSd, female: MeanSd, male: MeanSd },
    Categorical { levels: Vec<LevelCount> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub summary: SummaryKind,
    /// Welch t-test (continuous) or chi-square (categorical) between sexes.
    pub test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalitySummary {
    pub total: Count,
    pub female: Count,
    pub male: Count,
    pub test: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    pub n_female: usize,
    pub n_male: usize,
    pub features: Vec<FeatureSummary>,
    pub mortality: MortalitySummary,
}

fn mean_sd(xs: &[f64]) -> MeanSd {
    MeanSd { n: xs.len(), mean: mean(xs), sd: sd(xs) }
}

fn count(k: usize, of: usize) -> Count {
    Count { count: k, percent: if of == 0 { 0.0 } else { 100.0 * k as f64 / of as f64 } }
}

fn continuous(
    name: &str,
    episodes: &[RawEpisode],
    value: impl Fn(&RawEpisode) -> Option<f64>,
) -> FeatureSummary {
    let pick = |sex: Option<Sex>| -> Vec<f64> {
        episodes.iter().filter(|e| sex.is_none_or(|s| e.sex == s)).filter_map(&value).collect()
    };
    let (all, f, m) = (pick(None), pick(Some(Sex::Female)), pick(Some(Sex::Male)));
    FeatureSummary {
        name: name.to_string(),
        test: welch_t_test(&f, &m),
        summary: SummaryKind::Continuous { total: mean_sd(&all), female: mean_sd(&f), male: mean_sd(&m) },
    }
}

fn categorical(
    name: &str,
    episodes: &[RawEpisode],
    levels: &[String],
    value: impl Fn(&RawEpisode) -> Option<String>,
) -> FeatureSummary {
    let observed: Vec<(Sex, String)> = episodes.iter().filter_map(|e| value(e).map(|v| (e.sex, v))).collect();
    let n_f = observed.iter().filter(|(s, _)| *s == Sex::Female).count();
    let n_m = observed.len() - n_f;
    let mut rows = Vec::new();
    let mut table = vec![Vec::new(), Vec::new()];
    for level in levels {
        let f = observed.iter().filter(|(s, v)| *s == Sex::Female && v == level).count();
        let m = observed.iter().filter(|(s, v)| *s == Sex::Male && v == level).count();
        table[0].push(f as f64);
        table[1].push(m as f64);
        rows.push(LevelCount {
            level: level.clone(),
            total: count(f + m, observed.len()),
            female: count(f, n_f),
            male: count(m, n_m),
        });
    }
    FeatureSummary {
        name: name.to_string(),
        test: chi_square_independence(&table),
        summary: SummaryKind::Categorical { levels: rows },
    }
}

/// Summarizes age, length of stay, every declared feature and mortality,
/// each split by sex. Dynamic features are summarized by per-episode mean.
pub fn summarize_cohort(episodes: &[RawEpisode], spec: &[FeatureSpec]) -> Result<CohortSummary> {
    let n_female = episodes.iter().filter(|e| e.sex == Sex::Female).count();
    let n_male = episodes.len() - n_female;
    if n_female == 0 || n_male == 0 {
        return Err(Error::input("cohort summary needs both sexes present"));
    }
    let mut features = vec![
        continuous(BUILTIN_AGE, episodes, |e| Some(e.age)),
        continuous(BUILTIN_LOS, episodes, |e| Some(e.length_of_stay)),
    ];
    for f in spec.iter().filter(|f| ![BUILTIN_AGE, BUILTIN_LOS, BUILTIN_SEX].contains(&f.name.as_str())) {
        let name = f.name.as_str();
        let summary = match f.kind {
            FeatureKind::StaticNumeric => continuous(name, episodes, |e| e.number(name)),
            FeatureKind::DynamicNumeric => {
                continuous(name, episodes, |e| e.dynamic_values.get(name).and_then(|d| d.summary().2))
            }
            FeatureKind::BinaryFlag => categorical(name, episodes, &["0".into(), "1".into()], |e| {
                e.number(name).map(|v| if v != 0.0 { "1".into() } else { "0".into() })
            }),
            FeatureKind::StaticCategorical => {
                let levels: Vec<String> = if f.levels.is_empty() {
                    let mut l: Vec<String> =
                        episodes.iter().filter_map(|e| e.category(name)).map(str::to_string).collect();
                    l.sort();
                    l.dedup();
                    l
                } else {
                    f.levels.clone()
                };
                categorical(name, episodes, &levels, |e| match e.static_values.get(name) {
                    Some(StaticValue::Category(c)) => Some(c.clone()),
                    _ => None,
                })
            }
        };
        features.push(summary);
    }
    let deaths =
        |sex: Option<Sex>| episodes.iter().filter(|e| sex.is_none_or(|s| e.sex == s) && e.label == 1).count();
    let (d, df, dm) = (deaths(None), deaths(Some(Sex::Female)), deaths(Some(Sex::Male)));
    let table = vec![vec![df as f64, (n_female - df) as f64], vec![dm as f64, (n_male - dm) as f64]];
    Ok(CohortSummary {
        n: episodes.len(),
        n_female,
        n_male,
        features,
        mortality: MortalitySummary {
            total: count(d, episodes.len()),
            female: count(df, n_female),
            male: count(dm, n_male),
            test: chi_square_independence(&table),
        },
    })
}

fn fmt_p(t: &TestOutcome) -> String {
    match t.p_value() {
        None => "n/a".into(),
        Some(p) if p < 0.001 => "<0.001".into(),
        Some(p) => format!("{p:.3}"),
    }
}

impl CohortSummary {
    /// Markdown rendering in the layout of a clinical cohort table.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "| Feature | Total n={} | Women n={} ({:.0}%) | Men n={} ({:.0}%) | P-value |\n|---|---|---|---|---|\n",
            self.n,
            self.n_female,
            100.0 * self.n_female as f64 / self.n as f64,
            self.n_male,
            100.0 * self.n_male as f64 / self.n as f64
        );
        for f in &self.features {
            match &f.summary {
                SummaryKind::Continuous { total, female, male } => {
                    out += &format!(
                        "| {} | {:.2}±{:.2} | {:.2}±{:.2} | {:.2}±{:.2} | {} |\n",
                        f.name,
                        total.mean,
                        total.sd,
                        female.mean,
                        female.sd,
                        male.mean,
                        male.sd,
                        fmt_p(&f.test)
                    );
                }
                SummaryKind::Categorical { levels } => {
                    for l in levels {
                        out += &format!(
                            "| {} = {} | {} ({:.2}%) | {} ({:.2}%) | {} ({:.2}%) | {} |\n",
                            f.name,
                            l.level,
                            l.total.count,
                            l.total.percent,
                            l.female.count,
                            l.female.percent,
                            l.male.count,
                            l.male.percent,
                            fmt_p(&f.test)
                        );
                    }
                }
            }
        }
        let m = &self.mortality;
        out += &format!(
            "| Died | {} ({:.2}%) | {} ({:.2}%) | {} ({:.2}%) | {} |\n",
            m.total.count,
            m.total.percent,
            m.female.count,
            m.female.percent,
            m.male.count,
            m.male.percent,
            fmt_p(&m.test)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::spec::ClinicalSet;

    fn cohort() -> Vec<RawEpisode> {
        (0..20)
            .map(|i| {
                let sex = if i % 2 == 0 { Sex::Female } else { Sex::Male };
                let mut e = RawEpisode::new(i.to_string(), sex, 60.0, 1.0 + i as f64, u8::from(i % 5 == 0));
                e.static_values.insert("shock".into(), StaticValue::Number(f64::from(u8::from(i % 3 == 0))));
                e.static_values.insert("killip".into(), StaticValue::Category(["I", "II"][i % 2].into()));
                e
            })
            .collect()
    }

    #[test]
    fn constant_age_is_not_applicable() {
        let spec = vec![FeatureSpec::new("shock", FeatureKind::BinaryFlag, ClinicalSet::Complications)];
        let s = summarize_cohort(&cohort(), &spec).unwrap();
        assert_eq!(s.features[0].name, "age");
        assert_eq!(s.features[0].test, TestOutcome::NotApplicable);
        assert!(s.features[1].test.p_value().is_some());
    }

    #[test]
    fn percentages_and_counts_close() {
        let spec = vec![
            FeatureSpec::new("shock", FeatureKind::BinaryFlag, ClinicalSet::Complications),
            FeatureSpec::new("killip", FeatureKind::StaticCategorical, ClinicalSet::Demographic),
        ];
        let s = summarize_cohort(&cohort(), &spec).unwrap();
        for f in &s.features {
            if let SummaryKind::Categorical { levels } = &f.summary {
                for part in [|l: &LevelCount| l.total, |l: &LevelCount| l.female, |l: &LevelCount| l.male] {
                    let pct: f64 = levels.iter().map(|l| part(l).percent).sum();
                    assert!((pct - 100.0).abs() < 0.1);
                }
                assert_eq!(levels.iter().map(|l| l.total.count).sum::<usize>(), 20);
            }
        }
        assert_eq!(s.mortality.total.count, 4);
        assert!(s.to_markdown().contains("| killip = II |"));
    }

    #[test]
    fn one_sex_is_an_error() {
        let eps: Vec<_> = cohort().into_iter().filter(|e| e.sex == Sex::Male).collect();
        assert!(summarize_cohort(&eps, &[]).is_err());
    }
}
