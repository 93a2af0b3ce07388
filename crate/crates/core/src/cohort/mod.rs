//! Cohort data contract, design-matrix construction, summaries and the
//! synthetic cohort generator.

mod episode;
mod io;
pub(crate) mod matrix;
mod spec;
mod split;
mod summary;
pub mod synth;

pub use episode::{DynamicValue, RawEpisode, Sex, StaticValue};
pub use io::{load_episodes, load_episodes_long, read_episodes, write_episodes, Loaded};
pub use matrix::{
    build_matrix, build_matrix_fitted_on, ColumnDescriptor, Derivation, FeatureMatrix, Preprocessor,
    RawColumns, Standardization, SubgroupTag,
};
pub use spec::{load_feature_specs, validate_specs, ClinicalSet, FeatureKind, FeatureSpec};
pub use split::{split_holdout, split_indices, SplitIndex};
pub use summary::{
    summarize_cohort, CohortSummary, Count, FeatureSummary, LevelCount, MeanSd, MortalitySummary, SummaryKind,
};
pub use synth::{synth_cohort, SynthConfig, SynthOutput, SyntheticTruth};

/// Names of episode fields that may be referenced as features.
pub const BUILTIN_AGE: &str = "age";
pub const BUILTIN_LOS: &str = "los_days";
pub const BUILTIN_SEX: &str = "sex";
