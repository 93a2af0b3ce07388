#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use riskbench_core::rng;
use riskbench_core::stats::sigmoid;
use riskbench_core::FeatureMatrix;

/// Gaussian design with logistic labels driven by `coef` (padded with zeros).
pub fn logistic_data(n: usize, p: usize, coef: &[f64], intercept: f64, seed: u64) -> FeatureMatrix {
    let mut r = rng::seeded(seed);
    let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut r));
    let labels = (0..n)
        .map(|i| {
            let eta: f64 = intercept + coef.iter().enumerate().map(|(j, c)| c * x[[i, j]]).sum::<f64>();
            u8::from(r.random::<f64>() < sigmoid(eta))
        })
        .collect();
    FeatureMatrix::from_dense(x, labels, None)
}

/// Labels from a nonlinear rule with threshold interactions.
pub fn threshold_data(n: usize, p: usize, seed: u64) -> FeatureMatrix {
    let mut r = rng::seeded(seed);
    let x: Array2<f64> = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut r));
    let labels = (0..n)
        .map(|i| {
            let eta = -2.0
                + 3.0 * f64::from(u8::from(x[[i, 0]] > 0.5 && x[[i, 1]] > 0.0))
                + 2.0 * f64::from(u8::from(x[[i, 2]] < -0.8));
            u8::from(r.random::<f64>() < sigmoid(eta))
        })
        .collect();
    FeatureMatrix::from_dense(x, labels, None)
}

pub fn duplicate_rows(m: &FeatureMatrix) -> FeatureMatrix {
    let rows: Vec<usize> = (0..m.n_rows()).chain(0..m.n_rows()).collect();
    m.select_rows(&rows)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-8)
}

/// The demo planted cohort, optionally resized.
pub fn planted_config(n: Option<usize>) -> riskbench_core::cohort::SynthConfig {
    let mut cfg: riskbench_core::cohort::SynthConfig =
        serde_json::from_str(include_str!("../../../../demo/planted_cohort.json")).unwrap();
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg
}

/// Draws a planted cohort and returns `(train, test)` matrices standardized on the train rows.
pub fn planted_split(n: usize, test_fraction: f64, seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    use riskbench_core::cohort::{build_matrix_fitted_on, split_indices, synth_cohort};
    let out = synth_cohort(&planted_config(Some(n)), seed).unwrap();
    let labels: Vec<u8> = out.episodes.iter().map(|e| e.label).collect();
    let split = split_indices(&labels, test_fraction, seed).unwrap();
    let (m, _) = build_matrix_fitted_on(&out.episodes, &out.specs, &split.train_rows).unwrap();
    (m.select_rows(&split.train_rows), m.select_rows(&split.test_rows))
}
