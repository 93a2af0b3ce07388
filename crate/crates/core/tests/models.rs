mod common;

use common::{duplicate_rows, logistic_data, planted_split, rel_close, threshold_data};
use ndarray::Array2;
use proptest::prelude::*;
use riskbench_core::eval::auc;
use riskbench_core::models::*;
use riskbench_core::{Error, FeatureMatrix};

#[test]
fn class_weights_from_cohort_counts() {
    let mut labels = vec![0u8; 1299];
    labels[..88].fill(1);
    let w = class_weights(&labels).unwrap();
    assert!((w.w1 - 7.3807).abs() < 1e-4, "{}", w.w1);
    assert!((w.w0 - 0.5363).abs() < 1e-4, "{}", w.w0);

    let mut labels = vec![0u8; 2820];
    labels[..260].fill(1);
    assert!((class_weights(&labels).unwrap().w1 - 5.4231).abs() < 1e-4);

    let balanced: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
    assert_eq!(class_weights(&balanced).unwrap(), ClassWeights { w0: 1.0, w1: 1.0 });
}

#[test]
fn one_class_cannot_be_weighted() {
    let err = class_weights(&[1, 1, 1]).unwrap_err();
    assert!(matches!(err, Error::OneClass));
    assert_eq!(err.to_string(), "cannot weight a one-class problem");
}

proptest! {
    #[test]
    fn weighted_classes_each_carry_half(labels in prop::collection::vec(0u8..2, 2..400)) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let n = labels.len() as f64;
        let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
        let w = class_weights(&labels).unwrap();
        prop_assert!((w.w0 * (n - n1) - n / 2.0).abs() < 1e-9);
        prop_assert!((w.w1 * n1 - n / 2.0).abs() < 1e-9);
    }
}

fn finite_difference_check(loss: Loss, seed: u64) {
    let m = logistic_data(60, 4, &[1.0, -0.5], 0.2, seed);
    let w = class_weights(&m.labels).unwrap();
    let mut r = riskbench_core::rng::seeded(seed + 1000);
    use rand_distr::{Distribution, StandardNormal};
    let beta: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut r)).collect();
    let b0: f64 = StandardNormal.sample(&mut r);
    let (g, gb) = weighted_loss_gradient(loss, m.rows.view(), &m.labels, &w, &beta, b0);
    let h = 1e-6;
    let f = |beta: &[f64], b0: f64| weighted_loss(loss, m.rows.view(), &m.labels, &w, beta, b0);
    for j in 0..4 {
        let (mut up, mut dn) = (beta.clone(), beta.clone());
        up[j] += h;
        dn[j] -= h;
        let fd = (f(&up, b0) - f(&dn, b0)) / (2.0 * h);
        assert!(rel_close(fd, g[j], 1e-5), "{loss:?} seed {seed} coord {j}: fd {fd} analytic {}", g[j]);
    }
    let fd = (f(&beta, b0 + h) - f(&beta, b0 - h)) / (2.0 * h);
    assert!(rel_close(fd, gb, 1e-5), "{loss:?} intercept: fd {fd} analytic {gb}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    for seed in 0..20 {
        finite_difference_check(Loss::Logistic, seed);
    }
}

#[test]
fn squared_hinge_gradient_matches_finite_differences() {
    // Random real-valued margins almost surely avoid the kink at 1.
    for seed in 0..20 {
        finite_difference_check(Loss::SquaredHinge, seed);
    }
}

#[test]
fn logistic_hessian_matches_finite_differences() {
    for seed in 0..20 {
        let m = logistic_data(50, 3, &[0.7], 0.0, seed);
        let w = class_weights(&m.labels).unwrap();
        let beta = [0.3, -0.2 + seed as f64 * 0.01, 0.1];
        let hess = weighted_loss_hessian(Loss::Logistic, m.rows.view(), &m.labels, &w, &beta, 0.05);
        let h = 1e-6;
        for a in 0..3 {
            let (mut up, mut dn) = (beta, beta);
            up[a] += h;
            dn[a] -= h;
            let gu = weighted_loss_gradient(Loss::Logistic, m.rows.view(), &m.labels, &w, &up, 0.05).0;
            let gd = weighted_loss_gradient(Loss::Logistic, m.rows.view(), &m.labels, &w, &dn, 0.05).0;
            for b in 0..3 {
                let fd = (gu[b] - gd[b]) / (2.0 * h);
                assert!(rel_close(fd, hess[a][b], 1e-5), "seed {seed} ({a},{b}): {fd} vs {}", hess[a][b]);
            }
        }
    }
}

#[test]
fn separable_data_gives_finite_weights() {
    let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 - 19.5);
    let labels: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
    let m = FeatureMatrix::from_dense(x, labels.clone(), None);
    let w = class_weights(&labels).unwrap();
    let model = fit(&m, &labels, &w, &ModelConfig::logistic(Penalty::L2, 1.0)).unwrap();
    assert!(model.coefficients().unwrap()[0].is_finite());
    assert_eq!(auc(&model.predict_margin(&m).unwrap(), &labels).unwrap(), 1.0);
}

#[test]
fn strong_l1_zeroes_noise_features() {
    let m = logistic_data(200, 5, &[], 0.0, 3);
    let w = class_weights(&m.labels).unwrap();
    let model = fit(&m, &m.labels, &w, &ModelConfig::logistic(Penalty::L1, 1e-3)).unwrap();
    assert!(model.coefficients().unwrap().iter().all(|&b| b == 0.0));
    // With balanced weights the fitted intercept is the weighted base rate: 0.
    let p = model.predict_proba(&m).unwrap();
    assert!(p.iter().all(|&v| (v - 0.5).abs() < 1e-6), "{:?}", &p[..3]);
}

#[test]
fn regularization_path_is_monotone() {
    for (learner, penalty) in [
        (Learner::Lr, Penalty::L1),
        (Learner::Lr, Penalty::L2),
        (Learner::Lr, Penalty::Elasticnet),
        (Learner::Svm, Penalty::L2),
    ] {
        let m = logistic_data(300, 6, &[1.2, -0.8, 0.4], -0.5, 11);
        let w = class_weights(&m.labels).unwrap();
        let loss = if learner == Learner::Lr { Loss::Logistic } else { Loss::SquaredHinge };
        let mut last = f64::INFINITY;
        for c in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
            let config = if learner == Learner::Lr {
                ModelConfig::logistic(penalty, c)
            } else {
                ModelConfig::svm(penalty, c)
            };
            let model = fit(&m, &m.labels, &w, &config).unwrap();
            let beta = model.coefficients().unwrap();
            let l = weighted_loss(loss, m.rows.view(), &m.labels, &w, beta, model.base_score);
            assert!(l <= last + 1e-9, "{learner} {penalty:?} C={c}: loss {l} > {last}");
            last = l;
        }
    }
}

#[test]
fn svm_separates_clouds_and_flips_with_labels() {
    let x = Array2::from_shape_fn(
        (60, 2),
        |(i, j)| if i < 30 { -3.0 } else { 3.0 } + ((i * 7 + j * 3) % 5) as f64 * 0.1,
    );
    let labels: Vec<u8> = (0..60).map(|i| u8::from(i >= 30)).collect();
    let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
    let m = FeatureMatrix::from_dense(x, labels.clone(), None);
    let w = class_weights(&labels).unwrap();
    let config = ModelConfig::svm(Penalty::L2, 10.0);
    let a = fit(&m, &labels, &w, &config).unwrap();
    assert_eq!(auc(&a.predict_raw(&m).unwrap(), &labels).unwrap(), 1.0);
    let hinge = weighted_loss(
        Loss::SquaredHinge,
        m.rows.view(),
        &labels,
        &w,
        a.coefficients().unwrap(),
        a.base_score,
    );
    assert!(hinge < 1e-3, "{hinge}");
    let b = fit(&m, &flipped, &w, &config).unwrap();
    for (ra, rb) in a.predict_raw(&m).unwrap().iter().zip(b.predict_raw(&m).unwrap()) {
        assert!((ra + rb).abs() < 1e-6, "{ra} vs {rb}");
    }
}

#[test]
fn svm_rejects_elasticnet() {
    let m = logistic_data(50, 2, &[1.0], 0.0, 1);
    let w = class_weights(&m.labels).unwrap();
    assert!(fit(&m, &m.labels, &w, &ModelConfig::svm(Penalty::Elasticnet, 1.0)).is_err());
}

#[test]
fn forest_root_takes_separating_feature() {
    let x = Array2::from_shape_fn((50, 3), |(i, j)| match j {
        1 => f64::from(u8::from(i % 2 == 0)),
        _ => ((i * 13 + j * 7) % 11) as f64,
    });
    let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 2 == 0)).collect();
    let m = FeatureMatrix::from_dense(x, labels.clone(), None);
    let config = ModelConfig { max_features: Some(3), bootstrap: Some(false), ..ModelConfig::forest(1, 1) };
    let model = fit(&m, &labels, &class_weights(&labels).unwrap(), &config).unwrap();
    assert_eq!(model.trees().unwrap()[0].nodes[0].split.unwrap().feature, 1);
}

#[test]
fn forest_on_constant_labels_predicts_that_class() {
    let m = logistic_data(30, 3, &[], 0.0, 2);
    let labels = vec![1u8; 30];
    let model = fit(&m, &labels, &ClassWeights::UNIFORM, &ModelConfig::forest(5, 3)).unwrap();
    assert!(model.predict_raw(&m).unwrap().iter().all(|&p| p == 1.0));
}

#[test]
fn forest_rejects_zero_depth() {
    let m = logistic_data(30, 3, &[1.0], 0.0, 2);
    let w = class_weights(&m.labels).unwrap();
    assert!(fit(&m, &m.labels, &w, &ModelConfig::forest(5, 0)).is_err());
}

#[test]
fn forest_oob_auc_tracks_holdout() {
    // 5,000 rows per side keep the sampling noise of both AUCs near 0.01,
    // well inside the 0.03 tolerance.
    for seed in 1..=10 {
        let (tr, te) = planted_split(10_000, 0.5, seed);
        let w = class_weights(&tr.labels).unwrap();
        let model = fit(&tr, &tr.labels, &w, &ModelConfig::forest(200, 8).with_seed(seed)).unwrap();
        let oob = model.metadata.oob_auc.unwrap();
        let held = auc(&model.predict_raw(&te).unwrap(), &te.labels).unwrap();
        assert!((oob - held).abs() < 0.03, "seed {seed}: oob {oob:.3} held-out {held:.3}");
    }
}

#[test]
fn zero_learning_rate_predicts_base_score() {
    let m = logistic_data(200, 4, &[1.0], -1.0, 5);
    let w = class_weights(&m.labels).unwrap();
    let model = fit(&m, &m.labels, &w, &ModelConfig::gbt(20, 3, 0.0)).unwrap();
    let expect = riskbench_core::stats::sigmoid(model.base_score);
    assert!(model.predict_proba(&m).unwrap().iter().all(|&p| p == expect));
}

#[test]
fn huge_gamma_leaves_base_rate_model() {
    let m = logistic_data(200, 4, &[1.0], -1.0, 5);
    let config = ModelConfig { gamma: Some(1e12), ..ModelConfig::gbt(20, 3, 0.1) };
    let model = fit(&m, &m.labels, &ClassWeights::UNIFORM, &config).unwrap();
    assert!(model.metadata.warnings.iter().any(|w| w.contains(NO_SPLIT_WARNING)));
    let rate = m.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / 200.0;
    for p in model.predict_proba(&m).unwrap() {
        assert!((p - rate).abs() < 1e-9, "{p} vs {rate}");
    }
}

#[test]
fn gbt_without_randomness_ignores_seed() {
    let m = threshold_data(300, 5, 1);
    let w = class_weights(&m.labels).unwrap();
    let config =
        ModelConfig { subsample: Some(1.0), dropout_rate: Some(0.0), ..ModelConfig::gbt(30, 3, 0.1) };
    let a = fit(&m, &m.labels, &w, &config.clone().with_seed(1)).unwrap();
    let b = fit(&m, &m.labels, &w, &config.with_seed(999)).unwrap();
    assert_eq!(a.payload, b.payload);
}

#[test]
fn trees_respect_max_depth() {
    let m = threshold_data(400, 6, 2);
    let w = class_weights(&m.labels).unwrap();
    for depth in 1..=6 {
        for config in [
            ModelConfig::forest(10, depth),
            ModelConfig { gamma: Some(0.0), ..ModelConfig::gbt(10, depth, 0.3) },
        ] {
            let model = fit(&m, &m.labels, &w, &config).unwrap();
            for t in model.trees().unwrap() {
                assert!(t.depth() <= depth, "{} depth {} > {depth}", config.label(), t.depth());
                for node in &t.nodes {
                    assert!(node.value.is_finite());
                    if let Some(s) = node.split {
                        assert!(s.feature < 6 && s.threshold.is_finite());
                    }
                }
            }
        }
    }
}

#[test]
fn paper_best_gbt_learns_planted_signal() {
    // 1,000 rows with a planted threshold structure whose Bayes AUC is about 0.93.
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut hits = 0;
    for seed in 0..5u64 {
        let mut r = riskbench_core::rng::seeded(seed);
        let n = 1500;
        let x: Array2<f64> = Array2::from_shape_fn((n, 8), |_| StandardNormal.sample(&mut r));
        let eta: Vec<f64> = (0..n)
            .map(|i| {
                -2.6 + 2.0 * x[[i, 0]] + 1.5 * f64::from(u8::from(x[[i, 1]] > 0.5)) - 1.2 * x[[i, 2]]
                    + 1.0 * x[[i, 3]]
            })
            .collect();
        let p: Vec<f64> = eta.iter().map(|&e| riskbench_core::stats::sigmoid(e)).collect();
        let labels: Vec<u8> = p.iter().map(|&pi| u8::from(r.random::<f64>() < pi)).collect();
        let all = FeatureMatrix::from_dense(x, labels, None);
        let (tr, te) = (
            all.select_rows(&(0..1000).collect::<Vec<_>>()),
            all.select_rows(&(1000..n).collect::<Vec<_>>()),
        );
        let bayes = auc(&p[1000..], &te.labels).unwrap();
        let w = class_weights(&tr.labels).unwrap();
        let model = fit(&tr, &tr.labels, &w, &ModelConfig::gbt_reference().with_seed(seed)).unwrap();
        let a = auc(&model.predict_margin(&te).unwrap(), &te.labels).unwrap();
        println!("seed {seed}: bayes {bayes:.3} gbt {a:.3}");
        hits += usize::from(a >= 0.85);
    }
    assert!(hits >= 4, "{hits}/5 seeds reached 0.85");
}

fn assert_predictions_close(a: &TrainedModel, b: &TrainedModel, m: &FeatureMatrix, tol: f64) {
    for (x, y) in a.predict_proba(m).unwrap().iter().zip(b.predict_proba(m).unwrap()) {
        assert!((x - y).abs() < tol, "{x} vs {y}");
    }
}

#[test]
fn duplicating_rows_leaves_linear_and_forest_fits_unchanged() {
    let m = logistic_data(150, 4, &[1.0, -1.0], -0.7, 9);
    let d = duplicate_rows(&m);
    assert_eq!(class_weights(&m.labels).unwrap(), class_weights(&d.labels).unwrap());
    let w = class_weights(&m.labels).unwrap();
    for config in [
        ModelConfig::logistic(Penalty::L1, 1.0),
        ModelConfig::logistic(Penalty::Elasticnet, 0.5),
        ModelConfig::svm(Penalty::L2, 1.0),
        ModelConfig { bootstrap: Some(false), ..ModelConfig::forest(10, 4) },
    ] {
        let a = fit(&m, &m.labels, &w, &config).unwrap();
        let b = fit(&d, &d.labels, &w, &config).unwrap();
        assert_predictions_close(&a, &b, &m, 1e-6);
    }
}

#[test]
fn duplicating_rows_leaves_unregularized_boosting_unchanged() {
    // lambda, gamma, alpha and min_child_weight are absolute amounts, so
    // invariance is exact only when they are all zero.
    let m = threshold_data(200, 4, 4);
    let d = duplicate_rows(&m);
    let w = class_weights(&m.labels).unwrap();
    let config = ModelConfig {
        gamma: Some(0.0),
        lambda: Some(0.0),
        alpha: Some(0.0),
        min_child_weight: Some(0.0),
        subsample: Some(1.0),
        ..ModelConfig::gbt(15, 3, 0.3)
    };
    let a = fit(&m, &m.labels, &w, &config).unwrap();
    let b = fit(&d, &d.labels, &w, &config).unwrap();
    assert_predictions_close(&a, &b, &m, 1e-6);
}

#[test]
fn reloaded_models_predict_identically() {
    let m = threshold_data(300, 5, 8);
    let w = class_weights(&m.labels).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for config in [
        ModelConfig::logistic(Penalty::Elasticnet, 0.3),
        ModelConfig::svm(Penalty::L1, 2.0),
        ModelConfig::forest(20, 4),
        ModelConfig::gbt_reference(),
    ] {
        let model = fit(&m, &m.labels, &w, &config).unwrap();
        let path = dir.path().join(format!("{}.json", config.learner));
        model.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, model);
        let (a, b) = (model.predict_margin(&m).unwrap(), back.predict_margin(&m).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn column_mismatch_lists_the_difference() {
    let m = threshold_data(100, 3, 1);
    let w = class_weights(&m.labels).unwrap();
    let model = fit(&m, &m.labels, &w, &ModelConfig::logistic(Penalty::L2, 1.0)).unwrap();
    let other = FeatureMatrix::from_dense(
        m.rows.clone(),
        m.labels.clone(),
        Some(vec!["x0".into(), "x1".into(), "urea".into()]),
    );
    let err = model.predict_proba(&other).unwrap_err().to_string();
    assert!(err.contains("urea") && err.contains("x2"), "{err}");
}

#[test]
fn probability_is_sigmoid_of_margin() {
    let m = threshold_data(200, 4, 6);
    let w = class_weights(&m.labels).unwrap();
    for config in [
        ModelConfig::logistic(Penalty::L2, 1.0),
        ModelConfig::svm(Penalty::L2, 1.0),
        ModelConfig::gbt(10, 2, 0.3),
        ModelConfig::forest(10, 3),
    ] {
        let model = fit(&m, &m.labels, &w, &config).unwrap();
        let margins = model.predict_margin(&m).unwrap();
        let probs = model.predict_proba(&m).unwrap();
        for (mg, p) in margins.iter().zip(&probs) {
            assert_eq!(*p, riskbench_core::stats::sigmoid(*mg));
            assert!(*p > 0.0 && *p < 1.0);
        }
    }
}
