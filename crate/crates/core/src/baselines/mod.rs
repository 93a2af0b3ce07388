//! Clinical baselines: the GRACE point score and Cox regression used to
//! cross-check SHAP-identified markers.

mod cox;
mod grace;
mod markers;

pub use cox::{
    cox_gradient, cox_log_partial_likelihood, fit_cox, fit_cox_dense, CoxCoefficient, CoxFit,
    LOGLIK_TOLERANCE, MAX_ITERATIONS, SEPARATION_BETA,
};
pub use grace::{
    grace_eval, grace_score, grace_totals, Band, Direction, FlagPoints, GraceColumns, GraceComponent,
    GraceEvaluation, GraceInput, GracePointTable, GraceScore, Killip, KillipPoints, NumericMarker,
    NumericMarkers,
};
pub use markers::{
    compare_markers, format_p, top_markers, MarkerCell, MarkerComparison, MarkerRow, SubgroupKey,
};
