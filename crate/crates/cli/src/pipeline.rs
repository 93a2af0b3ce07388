//! The pipeline stages behind each subcommand.

use std::path::PathBuf;

use anyhow::{anyhow, Context};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use riskbench_core::baselines::{
    compare_markers, fit_cox, grace_eval, GraceInput, GracePointTable, SubgroupKey,
};
use riskbench_core::cohort::{
    build_matrix_fitted_on, load_episodes, load_episodes_long, load_feature_specs, split_indices,
    summarize_cohort, synth_cohort, write_episodes, Derivation, FeatureMatrix, FeatureSpec, RawEpisode,
    SplitIndex, SynthConfig,
};
use riskbench_core::eval::{
    grid_search, roc_csv, roc_curve, roc_svg, CvPlan, EvalReport, GridEntry, ScoreSet,
};
use riskbench_core::models::{class_weights, fit, ClassWeights, TrainingMetadata};
use riskbench_core::shap::{
    attribute, dependence_data, dependence_svg, feature_importance, force_explanation, force_svg,
    sample_background, subgroup_importance_matched, summary_data, summary_svg, DependenceData, Explanation,
    ImportanceRanking, SubgroupRanking, SummaryData,
};
use riskbench_core::{ModelConfig, TrainedModel};

use crate::artifacts::{Artifacts, MissingArtifact};
use crate::config::Loaded;
use crate::Invalid;

pub const COHORT: &str = "cohort.csv";
pub const FEATURES: &str = "features.json";
pub const TRUTH: &str = "cohort.truth.json";
pub const COHORT_SUMMARY: &str = "cohort_summary.md";
pub const TUNING: &str = "tuning.json";
pub const MODEL: &str = "model.json";
pub const TRAINING_LOG: &str = "training_log.json";
pub const EVALUATION: &str = "evaluation.json";
pub const ROC_SVG: &str = "roc.svg";
pub const ROC_CSV: &str = "roc.csv";
pub const ATTRIBUTIONS: &str = "attributions.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_SVG: &str = "summary.svg";
pub const DEPENDENCE_JSON: &str = "dependence.json";
pub const FORCE_JSON: &str = "force.json";
pub const FORCE_SVG: &str = "force.svg";
pub const SUBGROUPS: &str = "subgroups.json";
pub const MARKERS_MD: &str = "markers.md";
pub const MARKERS_CSV: &str = "markers.csv";
pub const MARKERS_JSON: &str = "markers.json";

/// Labels shown per force plot.
const FORCE_LABELS: usize = 8;
/// Features drawn in the summary plot.
const SUMMARY_FEATURES: usize = 20;

pub struct Pipeline {
    pub cfg: Loaded,
    pub out: Artifacts,
}

/// Cohort, design matrix and holdout split shared by the modelling stages.
struct Data {
    episodes: Vec<RawEpisode>,
    matrix: FeatureMatrix,
    split: SplitIndex,
    train: FeatureMatrix,
    test: FeatureMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthSidecar {
    truth: riskbench_core::cohort::SyntheticTruth,
    /// True mortality probability per episode, in cohort order.
    probabilities: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TuningReport {
    pub grid_size: usize,
    /// Absent when configurations were only enumerated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<CvPlan>,
    pub configs: Vec<ModelConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranked: Vec<RankedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<ModelConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub label: String,
    /// `mean ± sd` of the fold AUCs.
    pub auc: String,
    #[serde(flatten)]
    pub entry: GridEntry,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainingLog {
    config: ModelConfig,
    source: String,
    n_train: usize,
    n_test: usize,
    split_seed: u64,
    class_weights: ClassWeights,
    train_auc: f64,
    metadata: TrainingMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct Evaluation {
    model: String,
    report: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grace: Option<GraceSection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraceSection {
    table_version: String,
    report: EvalReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    background_size: usize,
    ranking: ImportanceRanking,
    summary: SummaryData,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

/// File-name safe form of a feature name.
fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

impl Pipeline {
    pub fn new(cfg: Loaded) -> Self {
        let out = Artifacts::new(cfg.output_dir(), &cfg.hash());
        Pipeline { cfg, out }
    }

    fn comment(&self) -> String {
        self.out.stamp.line()
    }

    fn input_or_artifact(
        &self,
        configured: &Option<PathBuf>,
        artifact: &str,
        needed_by: &str,
    ) -> anyhow::Result<PathBuf> {
        match configured {
            Some(p) => Ok(self.cfg.resolve(p)),
            None => {
                let p = self.out.path(artifact);
                if p.is_file() {
                    Ok(p)
                } else {
                    Err(MissingArtifact {
                        name: artifact.into(),
                        dir: self.out.dir.clone(),
                        needed_by: needed_by.into(),
                    }
                    .into())
                }
            }
        }
    }

    fn specs(&self, needed_by: &str) -> anyhow::Result<Vec<FeatureSpec>> {
        let path = self.input_or_artifact(&self.cfg.config.spec, FEATURES, needed_by)?;
        let text = std::fs::read_to_string(&path)?;
        // Our own spec artifact carries a provenance envelope.
        if let Ok(env) = serde_json::from_str::<crate::artifacts::Envelope<Vec<FeatureSpec>>>(&text) {
            return Ok(env.data);
        }
        Ok(load_feature_specs(&path)?)
    }

    fn data(&self, needed_by: &str) -> anyhow::Result<Data> {
        let specs = self.specs(needed_by)?;
        let path = self.input_or_artifact(&self.cfg.config.cohort, COHORT, needed_by)?;
        let loaded = match &self.cfg.config.series {
            Some(series) => load_episodes_long(&path, self.cfg.resolve(series), &specs),
            None => load_episodes(&path, &specs),
        }
        .with_context(|| format!("cannot load {}", path.display()))?;
        let episodes = loaded.episodes;
        let labels: Vec<u8> = episodes.iter().map(|e| e.label).collect();
        let split = split_indices(&labels, self.cfg.config.test_fraction, self.cfg.config.seeds.split)?;
        let (matrix, _) = build_matrix_fitted_on(&episodes, &specs, &split.train_rows)?;
        let train = matrix.select_rows(&split.train_rows);
        let test = matrix.select_rows(&split.test_rows);
        log::info!(
            "cohort: {} episodes, {} columns, {} train / {} test",
            episodes.len(),
            matrix.n_cols(),
            train.n_rows(),
            test.n_rows()
        );
        Ok(Data { episodes, matrix, split, train, test })
    }

    fn model(&self, needed_by: &str) -> anyhow::Result<TrainedModel> {
        Ok(self.out.read_json::<TrainedModel>(MODEL, needed_by)?.data)
    }

    pub fn synth(&self) -> anyhow::Result<()> {
        let path =
            self.cfg.config.synth.as_ref().ok_or_else(|| {
                invalid("`synth` needs a synthetic cohort configuration (config key `synth`)")
            })?;
        let path = self.cfg.resolve(path);
        let text =
            std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let synth: SynthConfig = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("invalid synthetic cohort {}: {e}", path.display())))?;
        let out = synth_cohort(&synth, self.cfg.config.seeds.synth)?;
        let mut csv = Vec::new();
        write_episodes(&mut csv, &out.episodes, &out.specs)?;
        self.out.csv(COHORT, std::str::from_utf8(&csv)?)?;
        self.out.json(FEATURES, "feature-specs", &out.specs)?;
        self.out.json(
            TRUTH,
            "synthetic-truth",
            &TruthSidecar { truth: out.truth, probabilities: out.probabilities },
        )?;
        self.out.markdown(COHORT_SUMMARY, &summarize_cohort(&out.episodes, &out.specs)?.to_markdown())?;
        Ok(())
    }

    /// Applies the fit seed so every configuration is reproducible from the config.
    fn seeded(&self, config: &ModelConfig) -> ModelConfig {
        config.clone().with_seed(self.cfg.config.seeds.fit)
    }

    pub fn tune(&self, enumerate_only: bool) -> anyhow::Result<()> {
        let mut grid = self
            .cfg
            .grid()?
            .ok_or_else(|| invalid("`tune` needs a grid (config key `grid` or --paper-grid)"))?;
        grid.base = self.seeded(&grid.base);
        let configs = grid.configs()?;
        log::info!("grid enumerates {} configurations", configs.len());
        let report = if enumerate_only {
            TuningReport { grid_size: configs.len(), plan: None, configs, ranked: Vec::new(), best: None }
        } else {
            let data = self.data("tune")?;
            let plan = self.cfg.cv_plan();
            let result = grid_search(&data.train, &data.train.labels, &grid, &plan)?;
            let ranked = result
                .ranking
                .iter()
                .enumerate()
                .map(|(r, &i)| {
                    let e = &result.entries[i];
                    RankedEntry { rank: r + 1, label: e.config.label(), auc: e.formatted(), entry: e.clone() }
                })
                .collect();
            let best = Some(result.best_entry().config.clone());
            TuningReport { grid_size: configs.len(), plan: Some(plan), configs, ranked, best }
        };
        self.out.json(TUNING, "tuning", &report)
    }

    fn chosen_config(&self) -> anyhow::Result<(ModelConfig, String)> {
        if let Some(m) = &self.cfg.config.model {
            return Ok((self.seeded(m), "config".into()));
        }
        let tuning = self.out.read_json::<TuningReport>(TUNING, "train (no `model` in the config)")?.data;
        let best = tuning.best.ok_or_else(|| {
            invalid(format!("{TUNING} only enumerates the grid; run `tune` without --enumerate-only"))
        })?;
        Ok((best, TUNING.into()))
    }

    pub fn train(&self) -> anyhow::Result<()> {
        let (config, source) = self.chosen_config()?;
        let data = self.data("train")?;
        let weights = class_weights(&data.train.labels)?;
        let model = fit(&data.train, &data.train.labels, &weights, &config)?;
        let train_auc = roc_curve(&model.predict_margin(&data.train)?, &data.train.labels)?.auc;
        log::info!("trained {} (train AUC {train_auc:.3})", config.label());
        self.out.json(MODEL, "model", &model)?;
        let log = TrainingLog {
            config,
            source,
            n_train: data.split.train_rows.len(),
            n_test: data.split.test_rows.len(),
            split_seed: data.split.seed,
            class_weights: weights,
            train_auc,
            metadata: model.metadata.clone(),
        };
        self.out.json(TRAINING_LOG, "training-log", &log)
    }

    /// Fold AUCs of the trained configuration, when tuning evaluated it.
    fn cv_aucs(&self, config: &ModelConfig) -> Option<Vec<f64>> {
        let tuning = self.out.read_json::<TuningReport>(TUNING, "evaluate").ok()?.data;
        tuning.ranked.into_iter().find(|r| &r.entry.config == config).map(|r| r.entry.fold_aucs)
    }

    fn grace_inputs(
        &self,
        episodes: &[RawEpisode],
        rows: &[usize],
        specs: &[FeatureSpec],
    ) -> Option<Vec<GraceInput>> {
        let cols = &self.cfg.config.grace.columns;
        let needed = [
            &cols.heart_rate,
            &cols.sbp,
            &cols.creatinine,
            &cols.killip,
            &cols.cardiac_arrest,
            &cols.st_deviation,
            &cols.elevated_enzymes,
        ];
        if let Some(missing) = needed.iter().find(|c| !specs.iter().any(|s| &s.name == **c)) {
            log::warn!("cohort has no `{missing}` column; GRACE comparison skipped");
            return None;
        }
        Some(rows.iter().map(|&i| GraceInput::from_episode(&episodes[i], cols)).collect())
    }

    pub fn evaluate(&self) -> anyhow::Result<()> {
        let model = self.model("evaluate")?;
        let data = self.data("evaluate")?;
        let specs = self.specs("evaluate")?;
        let labels = &data.test.labels;
        let c = &self.cfg.config;
        let scores = ScoreSet {
            rank: model.predict_margin(&data.test)?,
            calibrated: model.predict_proba(&data.test)?,
        };
        let mut report = EvalReport::new(&scores, labels, c.n_boot, c.seeds.bootstrap)?;
        if let Some(folds) = self.cv_aucs(&model.config) {
            report = report.with_cv(folds);
        }
        let model_curve = roc_curve(&scores.rank, labels)?;
        let mut curves = vec![(model.config.label(), model_curve.clone())];
        let mut grace = None;
        if let Some(inputs) = self.grace_inputs(&data.episodes, &data.split.test_rows, &specs) {
            let table = match &c.grace.table {
                Some(p) => GracePointTable::load(self.cfg.resolve(p))?,
                None => GracePointTable::granger2003(),
            };
            let g = grace_eval(&inputs, labels, &table, c.n_boot, c.seeds.bootstrap)?;
            report.compare("GRACE", &scores, &ScoreSet::same(g.scores.clone()), labels)?;
            curves.push(("GRACE".into(), roc_curve(&g.scores, labels)?));
            grace = Some(GraceSection { table_version: g.table_version, report: g.report });
        }
        let mut csv = String::from("curve,threshold,fpr,tpr\n");
        for (name, curve) in &curves {
            for line in roc_csv(curve).lines().skip(1) {
                csv.push_str(&format!("{name},{line}\n"));
            }
        }
        let refs: Vec<(&str, &riskbench_core::RocCurve)> =
            curves.iter().map(|(n, c)| (n.as_str(), c)).collect();
        self.out.svg(ROC_SVG, &roc_svg(&refs, &self.comment()))?;
        self.out.csv(ROC_CSV, &csv)?;
        self.out.json(EVALUATION, "evaluation", &Evaluation { model: model.config.label(), report, grace })
    }

    pub fn explain(&self) -> anyhow::Result<()> {
        let model = self.model("explain")?;
        let data = self.data("explain")?;
        let c = &self.cfg.config;
        let background = sample_background(&data.train, c.background_size, c.seeds.background)?;
        let attr = attribute(&model, &data.test, &background, "training background")?;
        self.out.csv(ATTRIBUTIONS, &attr.to_csv())?;

        let grouped = attr.group_by_source(&data.test.columns)?;
        let ranking = feature_importance(&grouped);
        let summary = summary_data(&grouped, Some(SUMMARY_FEATURES));
        self.out.svg(SUMMARY_SVG, &summary_svg(&summary, &self.comment()))?;
        self.out.json(
            SUMMARY_JSON,
            "shap-summary",
            &Summary { background_size: background.n_rows(), ranking: ranking.clone(), summary },
        )?;

        let plots: Vec<DependenceData> = ranking
            .entries
            .iter()
            .take(c.dependence_plots)
            .map(|e| dependence_data(&grouped, e.index, None))
            .collect::<Result<_, _>>()?;
        for d in &plots {
            self.out
                .svg(&format!("dependence_{}.svg", slug(&d.feature)), &dependence_svg(d, &self.comment()))?;
        }
        self.out.json(DEPENDENCE_JSON, "shap-dependence", &plots)?;

        // The highest-risk held-out patient; the first one on ties.
        let margins = model.predict_margin(&data.test)?;
        let top =
            margins.iter().enumerate().fold(0, |best, (i, m)| if *m > margins[best] { i } else { best });
        let force: Explanation = force_explanation(&grouped, top)?;
        self.out.svg(FORCE_SVG, &force_svg(&force, FORCE_LABELS, &self.comment()))?;
        self.out.json(FORCE_JSON, "shap-force", &force)?;

        let groups = subgroup_importance_matched(
            &model,
            &data.test,
            &data.train,
            &c.subgroups,
            c.background_size,
            c.seeds.background,
            true,
        )?;
        self.out.json(SUBGROUPS, "subgroup-importance", &groups)
    }

    pub fn compare(&self) -> anyhow::Result<()> {
        let groups = self.out.read_json::<Vec<SubgroupRanking>>(SUBGROUPS, "compare")?.data;
        let data = self.data("compare")?;
        let c = &self.cfg.config;
        let mut markers: Vec<String> = Vec::new();
        for g in &groups {
            for m in g.ranking.top(c.compare.top_k) {
                if !markers.iter().any(|x| x == m) {
                    markers.push(m.to_string());
                }
            }
        }
        let times: Vec<f64> = data
            .matrix
            .survival
            .iter()
            .zip(&data.matrix.episode_ids)
            .map(|(t, id)| {
                t.ok_or_else(|| {
                    invalid(format!(
                        "episode `{id}` has no survival_days; Cox comparison needs it for every episode"
                    ))
                })
            })
            .collect::<anyhow::Result<_>>()?;
        let rows_of = c.subgroups.assign(&data.matrix.tags)?;
        let fits: Vec<_> = groups
            .par_iter()
            .map(|g| {
                let rows = &rows_of
                    .iter()
                    .find(|(name, _)| name == &g.group)
                    .ok_or_else(|| anyhow!("subgroup `{}` not found in the cohort", g.group))?
                    .1;
                let (x, names) = marker_covariates(&data.matrix, rows, &markers);
                let t: Vec<f64> = rows.iter().map(|&i| times[i]).collect();
                let e: Vec<u8> = rows.iter().map(|&i| data.matrix.labels[i]).collect();
                let cov = FeatureMatrix::from_dense(x, e.clone(), Some(names));
                let fit =
                    fit_cox(&cov, &t, &e).with_context(|| format!("Cox fit in subgroup `{}`", g.group))?;
                Ok((SubgroupKey::new(&g.group, &c.compare.diagnosis), fit))
            })
            .collect::<anyhow::Result<_>>()?;
        let shap: Vec<_> = groups
            .iter()
            .map(|g| (SubgroupKey::new(&g.group, &c.compare.diagnosis), g.ranking.clone()))
            .collect();
        let grid = compare_markers(&shap, &fits, &markers)?;
        self.out.markdown(MARKERS_MD, &grid.to_markdown())?;
        self.out.csv(MARKERS_CSV, &grid.to_csv())?;
        self.out.json(MARKERS_JSON, "marker-comparison", &grid)
    }

    /// Runs every enabled stage in order.
    pub fn run(&self) -> anyhow::Result<()> {
        let s = self.cfg.config.stages.clone();
        if s.synth && self.cfg.config.synth.is_some() {
            self.synth()?;
        }
        if s.tune && self.cfg.config.grid.is_some() {
            self.tune(false)?;
        }
        if s.train {
            self.train()?;
        }
        if s.evaluate {
            self.evaluate()?;
        }
        if s.explain {
            self.explain()?;
        }
        if s.compare {
            self.compare()?;
        }
        Ok(())
    }
}

/// One Cox covariate per marker in clinical units: the mean of a dynamic
/// feature, the value of a numeric one, the level index of a categorical one.
/// Markers constant within the rows are left out.
fn marker_covariates(m: &FeatureMatrix, rows: &[usize], markers: &[String]) -> (Array2<f64>, Vec<String>) {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for marker in markers {
        let members: Vec<usize> = (0..m.n_cols()).filter(|&j| &m.columns[j].source == marker).collect();
        let values: Vec<f64> = match members
            .iter()
            .find(|&&j| matches!(m.columns[j].derivation, Derivation::Mean | Derivation::Value))
        {
            Some(&j) => rows.iter().map(|&i| m.raw[[i, j]]).collect(),
            None => rows
                .iter()
                .map(|&i| members.iter().enumerate().map(|(k, &j)| k as f64 * m.raw[[i, j]]).sum())
                .collect(),
        };
        if members.is_empty() || values.iter().all(|v| *v == values[0]) {
            continue;
        }
        cols.push(values);
        names.push(marker.clone());
    }
    let x = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| cols[j][i]);
    (x, names)
}
