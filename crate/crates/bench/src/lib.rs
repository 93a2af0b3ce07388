//! Fixtures shared by the criterion benchmarks.

use riskbench_core::cohort::{
    build_matrix_fitted_on, split_indices, synth_cohort, FeatureMatrix, SynthConfig,
};

const PLANTED: &str = include_str!("../../../demo/planted_cohort.json");

/// The demo cohort resized to `n` episodes, split 80/20 into
/// standardized train and test matrices.
pub fn planted(n: usize, seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    let mut config: SynthConfig = serde_json::from_str(PLANTED).expect("demo cohort parses");
    config.n = n;
    let out = synth_cohort(&config, seed).expect("demo cohort is valid");
    let labels: Vec<u8> = out.episodes.iter().map(|e| e.label).collect();
    let split = split_indices(&labels, 0.2, seed).expect("both classes present");
    let (m, _) = build_matrix_fitted_on(&out.episodes, &out.specs, &split.train_rows).expect("matrix builds");
    (m.select_rows(&split.train_rows), m.select_rows(&split.test_rows))
}
