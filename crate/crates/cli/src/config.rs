//! Run configuration: one JSON file drives every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use riskbench_core::baselines::GraceColumns;
use riskbench_core::eval::{CvPlan, Grid};
use riskbench_core::shap::Grouping;
use riskbench_core::{Learner, ModelConfig};

/// Every random stage draws from its own explicit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub fit: u64,
    pub cv: u64,
    pub bootstrap: u64,
    pub background: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    pub k: usize,
    pub repeats: usize,
    pub stratified: bool,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings { k: 5, repeats: 10, stratified: true }
    }
}

/// Tuning grid: a published preset or an explicit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridChoice {
    Paper(Learner),
    Custom(Box<Grid>),
    /// Path to a JSON file holding a grid.
    File(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraceSettings {
    /// Point table; the shipped Granger 2003 table when absent.
    pub table: Option<PathBuf>,
    pub columns: GraceColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    /// Cox covariates per subgroup: the top-k SHAP markers of that subgroup.
    pub top_k: usize,
    /// Diagnosis label printed in the marker grid header.
    pub diagnosis: String,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings { top_k: 10, diagnosis: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub synth: bool,
    pub tune: bool,
    pub train: bool,
    pub evaluate: bool,
    pub explain: bool,
    pub compare: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { synth: true, tune: true, train: true, evaluate: true, explain: true, compare: true }
    }
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_background() -> usize {
    riskbench_core::shap::DEFAULT_BACKGROUND
}

fn default_n_boot() -> usize {
    1000
}

fn default_dependence() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Episode CSV; defaults to the `synth` output in `output_dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort: Option<PathBuf>,
    /// Long-format measurement series (`episode_id,feature,timestamp,value`)
    /// merged into the cohort.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<PathBuf>,
    /// Feature spec JSON; defaults to the `synth` output in `output_dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    /// Synthetic cohort configuration used by `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<PathBuf>,
    pub seeds: Seeds,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Model to train; the tuning winner when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridChoice>,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default = "default_grouping")]
    pub subgroups: Grouping,
    #[serde(default = "default_background")]
    pub background_size: usize,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    /// Features (by importance) that get a dependence plot.
    #[serde(default = "default_dependence")]
    pub dependence_plots: usize,
    #[serde(default)]
    pub grace: GraceSettings,
    #[serde(default)]
    pub compare: CompareSettings,
    #[serde(default)]
    pub stages: Stages,
}

fn default_grouping() -> Grouping {
    Grouping::Sex
}

/// A parsed configuration with paths resolved against the config file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    /// Hex SHA-256 of the canonical JSON form, after command-line overrides.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.config).expect("configs serialize");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn cv_plan(&self) -> CvPlan {
        let cv = &self.config.cv;
        CvPlan { k: cv.k, repeats: cv.repeats, seed: self.config.seeds.cv, stratified: cv.stratified }
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> anyhow::Result<()> {
        let c = &self.config;
        if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1), got {}", c.test_fraction);
        }
        if c.background_size == 0 {
            bail!("background_size must be positive");
        }
        if c.cv.k < 2 || c.cv.repeats == 0 {
            bail!("cv needs k >= 2 and at least one repeat");
        }
        for (what, p) in [
            ("cohort", &c.cohort),
            ("series", &c.series),
            ("spec", &c.spec),
            ("synth", &c.synth),
            ("grace.table", &c.grace.table),
        ] {
            if let Some(p) = p {
                let full = self.resolve(p);
                if !full.is_file() {
                    bail!("{what} file {} does not exist", full.display());
                }
            }
        }
        if let Some(GridChoice::File(p)) = &c.grid {
            if !self.resolve(p).is_file() {
                bail!("grid file {} does not exist", self.resolve(p).display());
            }
        }
        if let Some(m) = &c.model {
            m.validate()?;
        }
        let out = self.output_dir();
        if out.exists() && !out.is_dir() {
            bail!("output_dir {} is not a directory", out.display());
        }
        Ok(())
    }

    pub fn grid(&self) -> anyhow::Result<Option<Grid>> {
        Ok(match &self.config.grid {
            None => None,
            Some(GridChoice::Paper(l)) => Some(Grid::paper(*l)),
            Some(GridChoice::Custom(g)) => Some((**g).clone()),
            Some(GridChoice::File(p)) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path)?;
                Some(
                    serde_json::from_str(&text)
                        .with_context(|| format!("invalid grid {}", path.display()))?,
                )
            }
        })
    }
}
