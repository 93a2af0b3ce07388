//! Episode CSV reading and writing.
//!
//! Wide format: `episode_id,sex,age,los_days,label[,survival_days]` followed
//! by one column per static feature and `name@min,name@max,name@mean` per
//! dynamic feature. An empty cell is a missing value. A long-format companion
//! file `episode_id,feature,timestamp,value` may carry raw measurement series.
//! Lines starting with `#` are comments in both formats.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};

use super::episode::{DynamicValue, RawEpisode, Sex, StaticValue};
use super::spec::{validate_specs, FeatureKind, FeatureSpec};
use super::{BUILTIN_AGE, BUILTIN_LOS, BUILTIN_SEX};
use crate::{Error, Result};

const REQUIRED: [&str; 5] = ["episode_id", "sex", "age", "los_days", "label"];
const SURVIVAL: &str = "survival_days";

/// Episodes plus the non-fatal problems found while reading them.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub episodes: Vec<RawEpisode>,
    pub warnings: Vec<String>,
}

impl Loaded {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

pub fn load_episodes(path: impl AsRef<Path>, spec: &[FeatureSpec]) -> Result<Loaded> {
    let file = std::fs::File::open(path)?;
    read_episodes(file, spec)
}

/// Wide file plus long-format measurement series.
pub fn load_episodes_long(
    path: impl AsRef<Path>,
    series_path: impl AsRef<Path>,
    spec: &[FeatureSpec],
) -> Result<Loaded> {
    let mut loaded = load_episodes(path, spec)?;
    let file = std::fs::File::open(series_path)?;
    merge_series(&mut loaded, file, spec)?;
    Ok(loaded)
}

fn is_builtin(name: &str) -> bool {
    matches!(name, BUILTIN_AGE | BUILTIN_LOS | BUILTIN_SEX)
}

fn parse_number(text: &str, line: usize, column: &str) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Malformed {
            line,
            column: column.to_string(),
            message: format!("`{text}` is not a finite number"),
        }),
    }
}

fn required<'r>(record: &'r StringRecord, idx: usize, line: usize, column: &str) -> Result<&'r str> {
    match record.get(idx) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::Malformed {
            line,
            column: column.to_string(),
            message: "required value is missing".into(),
        }),
    }
}

pub fn read_episodes<R: Read>(reader: R, spec: &[FeatureSpec]) -> Result<Loaded> {
    validate_specs(spec)?;
    let mut rdr = ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    for col in REQUIRED {
        if !index.contains_key(col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let mut loaded = Loaded::default();
    let mut consumed: HashSet<&str> = REQUIRED.iter().copied().collect();
    consumed.insert(SURVIVAL);

    // (feature, column indices) resolved once from the header.
    let mut static_cols = Vec::new();
    let mut dynamic_cols = Vec::new();
    for f in spec.iter().filter(|f| !is_builtin(&f.name)) {
        match f.kind {
            FeatureKind::DynamicNumeric => {
                let cols: Vec<Option<usize>> = ["min", "max", "mean"]
                    .iter()
                    .map(|suffix| index.get(format!("{}@{suffix}", f.name).as_str()).copied())
                    .collect();
                for c in cols.iter().flatten() {
                    consumed.insert(&headers[*c]);
                }
                if cols.iter().all(Option::is_none) {
                    loaded.warn(format!("feature `{}` has no aggregate columns in file", f.name));
                }
                dynamic_cols.push((f, cols));
            }
            _ => match index.get(f.name.as_str()) {
                Some(&c) => {
                    consumed.insert(&headers[c]);
                    static_cols.push((f, c));
                }
                None => loaded.warn(format!("feature `{}` not present in file", f.name)),
            },
        }
    }
    for h in headers.iter() {
        if !consumed.contains(h) {
            loaded.warn(format!("unknown column `{h}` ignored"));
        }
    }

    let survival_idx = index.get(SURVIVAL).copied();
    let mut ids = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = required(&record, index["episode_id"], line, "episode_id")?.to_string();
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateEpisode(id));
        }
        let sex: Sex = required(&record, index["sex"], line, "sex")?
            .parse()
            .map_err(|message| Error::Malformed { line, column: "sex".into(), message })?;
        let age = parse_number(required(&record, index["age"], line, "age")?, line, "age")?.unwrap();
        let los =
            parse_number(required(&record, index["los_days"], line, "los_days")?, line, "los_days")?.unwrap();
        for (v, col) in [(age, "age"), (los, "los_days")] {
            if v <= 0.0 {
                return Err(Error::Malformed {
                    line,
                    column: col.into(),
                    message: format!("must be positive, found {v}"),
                });
            }
        }
        let label = match required(&record, index["label"], line, "label")? {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Malformed {
                    line,
                    column: "label".into(),
                    message: format!("expected 0 or 1, found `{other}`"),
                })
            }
        };
        let mut ep = RawEpisode::new(id, sex, age, los, label);
        if let Some(i) = survival_idx {
            ep.survival_time = parse_number(record.get(i).unwrap_or(""), line, SURVIVAL)?;
        }
        for &(f, c) in &static_cols {
            let cell = record.get(c).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let value = match f.kind {
                FeatureKind::StaticCategorical => StaticValue::Category(cell.to_string()),
                FeatureKind::BinaryFlag => match cell {
                    "0" => StaticValue::Number(0.0),
                    "1" => StaticValue::Number(1.0),
                    other => {
                        return Err(Error::Malformed {
                            line,
                            column: f.name.clone(),
                            message: format!("binary flag must be 0 or 1, found `{other}`"),
                        })
                    }
                },
                _ => StaticValue::Number(parse_number(cell, line, &f.name)?.unwrap()),
            };
            ep.static_values.insert(f.name.clone(), value);
        }
        for (f, cols) in &dynamic_cols {
            let mut parts = [None; 3];
            for (slot, c) in parts.iter_mut().zip(cols) {
                if let Some(c) = c {
                    *slot = parse_number(record.get(*c).unwrap_or(""), line, &headers[*c])?;
                }
            }
            if parts.iter().any(Option::is_some) {
                ep.dynamic_values.insert(
                    f.name.clone(),
                    DynamicValue::Aggregate { min: parts[0], max: parts[1], mean: parts[2] },
                );
            }
        }
        loaded.episodes.push(ep);
    }
    if loaded.episodes.is_empty() {
        loaded.warn("empty cohort".to_string());
    }
    Ok(loaded)
}

fn merge_series<R: Read>(loaded: &mut Loaded, reader: R, spec: &[FeatureSpec]) -> Result<()> {
    let mut rdr = ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["episode_id", "feature", "timestamp", "value"];
    for col in expected {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ci, cf, ct, cv) = (col("episode_id"), col("feature"), col("timestamp"), col("value"));
    let dynamic: HashSet<&str> =
        spec.iter().filter(|f| f.kind == FeatureKind::DynamicNumeric).map(|f| f.name.as_str()).collect();
    let pos: HashMap<String, usize> =
        loaded.episodes.iter().enumerate().map(|(i, e)| (e.episode_id.clone(), i)).collect();
    let mut series: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = required(&record, ci, line, "episode_id")?;
        let feature = required(&record, cf, line, "feature")?;
        let Some(&row) = pos.get(id) else {
            warnings.push(format!("line {line}: unknown episode `{id}` in series file"));
            continue;
        };
        if !dynamic.contains(feature) {
            warnings.push(format!("line {line}: `{feature}` is not a declared dynamic feature"));
            continue;
        }
        let t = parse_number(required(&record, ct, line, "timestamp")?, line, "timestamp")?.unwrap();
        let Some(v) = parse_number(record.get(cv).unwrap_or(""), line, "value")? else {
            continue;
        };
        series.entry((row, feature.to_string())).or_default().push((t, v));
    }
    for w in warnings {
        loaded.warn(w);
    }
    for ((row, feature), mut points) in series {
        // Stable sort keeps the file order among equal timestamps.
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ep = &mut loaded.episodes[row];
        if ep.dynamic_values.contains_key(&feature) {
            let msg =
                format!("episode `{}`: series for `{feature}` replaces wide-file aggregates", ep.episode_id);
            loaded.warnings.push(msg);
        }
        loaded.episodes[row].dynamic_values.insert(feature, DynamicValue::Series(points));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes episodes in the wide format, features in `spec` order.
pub fn write_episodes<W: Write>(writer: W, episodes: &[RawEpisode], spec: &[FeatureSpec]) -> Result<()> {
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(writer);
    let with_survival = episodes.iter().any(|e| e.survival_time.is_some());
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    if with_survival {
        header.push(SURVIVAL.to_string());
    }
    let features: Vec<&FeatureSpec> = spec.iter().filter(|f| !is_builtin(&f.name)).collect();
    for f in &features {
        if f.kind == FeatureKind::DynamicNumeric {
            for suffix in ["min", "max", "mean"] {
                header.push(format!("{}@{suffix}", f.name));
            }
        } else {
            header.push(f.name.clone());
        }
    }
    w.write_record(&header)?;
    for e in episodes {
        let mut row = vec![
            e.episode_id.clone(),
            e.sex.to_string(),
            e.age.to_string(),
            e.length_of_stay.to_string(),
            e.label.to_string(),
        ];
        if with_survival {
            row.push(fmt_opt(e.survival_time));
        }
        for f in &features {
            if f.kind == FeatureKind::DynamicNumeric {
                let (lo, hi, m) =
                    e.dynamic_values.get(&f.name).map(DynamicValue::summary).unwrap_or((None, None, None));
                row.extend([fmt_opt(lo), fmt_opt(hi), fmt_opt(m)]);
            } else {
                row.push(match e.static_values.get(&f.name) {
                    Some(StaticValue::Number(v)) => v.to_string(),
                    Some(StaticValue::Category(c)) => c.clone(),
                    None => String::new(),
                });
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
