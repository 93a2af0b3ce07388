//! ROC analytics, cross-validation, grid search and paired tests.

mod bootstrap;
mod cv;
mod delong;
mod grid;
mod mcnemar;
mod report;
mod roc;

pub use bootstrap::{bootstrap_auc_ci, MIN_RESAMPLES};
pub use cv::{complement, stratified_folds, CvPlan, Folds};
pub use delong::{delong_test, DelongResult, MIN_VARIANCE};
pub use grid::{
    check_paper_legal, cross_validate, grid_search, rank, Grid, GridEntry, GridResult, MANUAL_TREES,
    PAPER_ALPHA, PAPER_C, PAPER_DEPTHS, PAPER_DROPOUT, PAPER_GAMMA, PAPER_LAMBDA, PAPER_LEARNING_RATE,
    PAPER_SUBSAMPLE, PAPER_TREES,
};
pub use mcnemar::{
    mcnemar_chi_square_p, mcnemar_exact_p, mcnemar_from_counts, mcnemar_test, McNemarMethod, McNemarResult,
    EXACT_BELOW,
};
pub use report::{roc_svg, Comparison, CvSummary, EvalReport, OperatingPoint, ScoreSet};
pub use roc::{auc, roc_csv, roc_curve, sens_spec, youden_threshold, RocCurve, RocPoint};
