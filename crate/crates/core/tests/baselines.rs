mod common;

use common::planted_config;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use riskbench_core::baselines::*;
use riskbench_core::cohort::synth::PlantedTerm;
use riskbench_core::cohort::synth_cohort;
use riskbench_core::eval::{delong_test, EvalReport, ScoreSet};
use riskbench_core::rng;
use riskbench_core::shap::{ImportanceEntry, ImportanceRanking};

fn profile(age: f64, hr: f64, sbp: f64, cr: f64, killip: Killip, flags: [bool; 3]) -> GraceInput {
    GraceInput {
        age: Some(age),
        heart_rate: Some(hr),
        sbp: Some(sbp),
        creatinine: Some(cr),
        killip: Some(killip),
        cardiac_arrest: Some(flags[0]),
        st_deviation: Some(flags[1]),
        elevated_enzymes: Some(flags[2]),
    }
}

fn total(x: &GraceInput) -> u32 {
    grace_score(x, &GracePointTable::granger2003()).unwrap().total
}

#[test]
fn spot_profiles_match_hand_lookup() {
    // Points read off the shipped table band by band.
    let cases = [
        (profile(65.0, 95.0, 130.0, 1.3, Killip::II, [false, true, true]), 58 + 15 + 34 + 10 + 20 + 28 + 14),
        (profile(45.0, 60.0, 150.0, 0.9, Killip::I, [false, false, false]), 25 + 3 + 24 + 7),
        (
            profile(82.0, 120.0, 85.0, 2.5, Killip::III, [true, true, true]),
            91 + 24 + 53 + 21 + 39 + 39 + 28 + 14,
        ),
        (profile(72.0, 88.0, 110.0, 1.7, Killip::IV, [false, false, true]), 75 + 9 + 43 + 13 + 59 + 14),
        // Lower band edges are inclusive.
        (profile(70.0, 110.0, 160.0, 4.0, Killip::I, [false, true, false]), 75 + 24 + 10 + 28 + 28),
    ];
    for (input, expected) in cases {
        assert_eq!(total(&input), expected, "{input:?}");
    }
}

#[test]
fn minimum_profile_scores_one() {
    // The lowest creatinine band carries one point, so no profile scores 0.
    assert_eq!(total(&profile(20.0, 40.0, 250.0, 0.3, Killip::I, [false; 3])), 1);
}

#[test]
fn killip_class_raises_the_score() {
    let at = |k| total(&profile(60.0, 80.0, 120.0, 1.0, k, [false; 3]));
    assert!(
        at(Killip::I) < at(Killip::II)
            && at(Killip::II) < at(Killip::III)
            && at(Killip::III) < at(Killip::IV)
    );
}

#[test]
fn missing_marker_is_named() {
    let mut x = profile(60.0, 80.0, 120.0, 1.0, Killip::I, [false; 3]);
    x.creatinine = None;
    let err = grace_score(&x, &GracePointTable::granger2003()).unwrap_err().to_string();
    assert!(err.contains("creatinine"), "{err}");
}

#[test]
fn non_monotone_table_is_rejected() {
    let mut v: serde_json::Value =
        serde_json::from_str(include_str!("../data/grace_granger2003.json")).unwrap();
    v["numeric"]["heart_rate"]["bands"][3]["points"] = serde_json::json!(1);
    assert!(GracePointTable::from_json(&v.to_string()).is_err());
}

/// Band lookup straight from the JSON file, independent of the typed table.
fn oracle(x: &GraceInput) -> u32 {
    let v: serde_json::Value = serde_json::from_str(include_str!("../data/grace_granger2003.json")).unwrap();
    let band = |name: &str, value: f64| -> u32 {
        for b in v["numeric"][name]["bands"].as_array().unwrap() {
            let lo = b["lower"].as_f64().unwrap();
            let hi = b["upper"].as_f64().unwrap_or(f64::INFINITY);
            if value >= lo && value < hi {
                return b["points"].as_u64().unwrap() as u32;
            }
        }
        panic!("{name} = {value} outside every band");
    };
    let flag = |name: &str, on: Option<bool>| {
        if on.unwrap() {
            v["flags"][name].as_u64().unwrap() as u32
        } else {
            0
        }
    };
    band("age", x.age.unwrap())
        + band("heart_rate", x.heart_rate.unwrap())
        + band("sbp", x.sbp.unwrap())
        + band("creatinine", x.creatinine.unwrap())
        + v["killip"][x.killip.unwrap().to_string()].as_u64().unwrap() as u32
        + flag("cardiac_arrest", x.cardiac_arrest)
        + flag("st_deviation", x.st_deviation)
        + flag("elevated_enzymes", x.elevated_enzymes)
}

fn any_profile() -> impl Strategy<Value = GraceInput> {
    (
        18.0..100.0f64,
        30.0..230.0f64,
        50.0..240.0f64,
        0.2..6.0f64,
        0usize..4,
        prop::array::uniform3(any::<bool>()),
    )
        .prop_map(|(a, h, s, c, k, f)| {
            profile(a, h, s, c, [Killip::I, Killip::II, Killip::III, Killip::IV][k], f)
        })
}

proptest! {
    #[test]
    fn score_is_a_pure_lookup(x in any_profile(), order in Just((0..8).collect::<Vec<usize>>()).prop_shuffle()) {
        let s = grace_score(&x, &GracePointTable::granger2003()).unwrap();
        prop_assert_eq!(s.total, oracle(&x));
        let shuffled: u32 = order.iter().map(|&i| s.breakdown[i].points).sum();
        prop_assert_eq!(shuffled, s.total);
    }

    #[test]
    fn score_moves_with_each_marker_in_its_direction(x in any_profile(), bump in 0.0..40.0f64) {
        let base = total(&x);
        let mut older = x;
        older.age = older.age.map(|a| a + bump);
        prop_assert!(total(&older) >= base);
        let mut faster = x;
        faster.heart_rate = faster.heart_rate.map(|h| h + bump);
        prop_assert!(total(&faster) >= base);
        let mut higher = x;
        higher.sbp = higher.sbp.map(|s| s + bump);
        prop_assert!(total(&higher) <= base);
        let mut worse = x;
        worse.creatinine = worse.creatinine.map(|c| c + bump / 10.0);
        prop_assert!(total(&worse) >= base);
    }
}

#[test]
fn grace_against_itself_is_degenerate() {
    let out = synth_cohort(&planted_config(Some(800)), 1).unwrap();
    let inputs: Vec<GraceInput> =
        out.episodes.iter().map(|e| GraceInput::from_episode(e, &GraceColumns::default())).collect();
    let labels: Vec<u8> = out.episodes.iter().map(|e| e.label).collect();
    let eval = grace_eval(&inputs, &labels, &GracePointTable::granger2003(), 200, 1).unwrap();
    assert_eq!(eval.table_version, "granger2003-inhospital-v1");
    let mut report: EvalReport = eval.report.clone();
    let s = ScoreSet::same(eval.scores.clone());
    let c = report.compare("GRACE", &s, &s, &labels).unwrap();
    assert!(c.delong.is_none());
    assert!(c.delong_note.as_deref().is_some_and(|n| !n.is_empty()));
}

#[test]
fn grace_detects_age_and_heart_rate_risk() {
    for seed in 1..=10u64 {
        let mut cfg = planted_config(Some(2000));
        cfg.planted = serde_json::from_str::<Vec<PlantedTerm>>(
            r#"[{"feature": "age", "weight": 1.0}, {"feature": "heart_rate", "weight": 1.0}]"#,
        )
        .unwrap();
        let out = synth_cohort(&cfg, seed).unwrap();
        let inputs: Vec<GraceInput> =
            out.episodes.iter().map(|e| GraceInput::from_episode(e, &GraceColumns::default())).collect();
        let labels: Vec<u8> = out.episodes.iter().map(|e| e.label).collect();
        let grace = grace_totals(&inputs, &GracePointTable::granger2003()).unwrap();
        let mut r = rng::seeded(seed);
        let noise: Vec<f64> = labels.iter().map(|_| r.random()).collect();
        let d = delong_test(&grace, &noise, &labels).unwrap();
        assert!(
            d.auc_a > 0.5 && d.p_value < 0.05,
            "seed {seed}: GRACE AUC {:.3}, p {:.3}",
            d.auc_a,
            d.p_value
        );
    }
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Exponential survival with log-hazard `x . beta` and independent
/// exponential censoring at rate `censor_rate`.
fn simulate_cox(x: &Array2<f64>, beta: &[f64], censor_rate: f64, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng::seeded(seed);
    let censor = Exp::new(censor_rate).unwrap();
    let mut times = Vec::new();
    let mut events = Vec::new();
    for row in x.rows() {
        let rate = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp();
        let t: f64 = Exp::new(rate).unwrap().sample(&mut r);
        let c: f64 = censor.sample(&mut r);
        times.push(t.min(c));
        events.push(u8::from(t <= c));
    }
    (times, events)
}

fn random_design(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::seeded(seed);
    Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut r))
}

#[test]
fn cox_gradient_matches_finite_differences() {
    for seed in 0..20u64 {
        let x = random_design(80, 3, seed);
        let (times, events) = simulate_cox(&x, &[0.5, -0.3, 0.0], 0.3, seed);
        // Day-resolution times create ties, exercising the Efron correction.
        let times: Vec<f64> = times.iter().map(|t| (t * 10.0).ceil()).collect();
        let fit = fit_cox_dense(x.view(), &names(3), &times, &events).unwrap();
        let mut r = rng::seeded(seed + 99);
        let beta: Vec<f64> =
            fit.coefficients.iter().map(|c| c.beta + 0.1 * r.random::<f64>() - 0.05).collect();
        let g = cox_gradient(x.view(), &times, &events, &beta).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let (mut up, mut dn) = (beta.clone(), beta.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (cox_log_partial_likelihood(x.view(), &times, &events, &up).unwrap()
                - cox_log_partial_likelihood(x.view(), &times, &events, &dn).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g[j]).abs() <= 1e-5 * fd.abs().max(g[j].abs()).max(1e-3),
                "seed {seed} coord {j}: {fd} vs {}",
                g[j]
            );
        }
    }
}

#[test]
fn cox_recovers_planted_hazard_ratio() {
    // Binary covariate, HR 2. Censoring rate 0.34 gives about 20% censoring:
    // 0.5 (0.34 / 1.34 + 0.34 / 2.34) = 0.199.
    let truth = 2f64.ln();
    let (mut sum, mut covered, mut censored) = (0.0, 0, 0.0);
    for seed in 0..50u64 {
        let mut r = rng::seeded(seed);
        let x = Array2::from_shape_fn((2000, 1), |_| f64::from(u8::from(r.random::<bool>())));
        let (times, events) = simulate_cox(&x, &[truth], 0.34, seed + 500);
        censored += events.iter().filter(|&&e| e == 0).count() as f64 / 2000.0;
        let fit = fit_cox_dense(x.view(), &names(1), &times, &events).unwrap();
        let c = &fit.coefficients[0];
        sum += c.beta;
        covered += usize::from((c.beta - truth).abs() <= 1.959964 * c.se);
    }
    let mean = sum / 50.0;
    assert!((mean - truth).abs() < 0.15, "mean beta {mean}");
    assert!(covered as f64 / 50.0 >= 0.92, "coverage {covered}/50");
    assert!((censored / 50.0 - 0.2).abs() < 0.02, "censoring {}", censored / 50.0);
}

#[test]
fn null_covariate_is_rarely_significant() {
    let mut inside = 0;
    for seed in 0..100u64 {
        let x = random_design(2000, 1, seed);
        let (times, events) = simulate_cox(&x, &[0.0], 0.3, seed + 7000);
        let c = &fit_cox_dense(x.view(), &names(1), &times, &events).unwrap().coefficients[0];
        inside += usize::from(c.beta.abs() < 2.0 * c.se);
    }
    assert!(inside >= 93, "{inside}/100");
}

#[test]
fn cox_is_unit_equivariant() {
    let x = random_design(500, 2, 3);
    let (times, events) = simulate_cox(&x, &[0.7, -0.4], 0.5, 3);
    let a = fit_cox_dense(x.view(), &names(2), &times, &events).unwrap();
    let mut scaled = x;
    scaled.column_mut(0).mapv_inplace(|v| v * 3.7);
    let b = fit_cox_dense(scaled.view(), &names(2), &times, &events).unwrap();
    let (ca, cb) = (&a.coefficients[0], &b.coefficients[0]);
    assert!((cb.beta - ca.beta / 3.7).abs() < 1e-6);
    assert!((cb.z - ca.z).abs() < 1e-6 && (cb.p_value - ca.p_value).abs() < 1e-6);
    assert!((b.coefficients[1].beta - a.coefficients[1].beta).abs() < 1e-6);
}

#[test]
fn early_censored_subject_changes_nothing() {
    // A subject censored before the first event never enters a risk set.
    let x = random_design(300, 2, 4);
    let (times, events) = simulate_cox(&x, &[0.5, 0.5], 0.3, 4);
    let base = fit_cox_dense(x.view(), &names(2), &times, &events).unwrap();
    let first_event =
        times.iter().zip(&events).filter(|(_, &e)| e == 1).map(|(t, _)| *t).fold(f64::INFINITY, f64::min);
    let mut x2 = x;
    x2.push_row(ndarray::array![0.3, -1.1].view()).unwrap();
    let mut t2 = times.clone();
    t2.push(first_event / 2.0);
    let mut e2 = events.clone();
    e2.push(0);
    let more = fit_cox_dense(x2.view(), &names(2), &t2, &e2).unwrap();
    for (a, b) in base.coefficients.iter().zip(&more.coefficients) {
        assert!((a.beta - b.beta).abs() < 1e-6);
    }
}

#[test]
fn zero_events_are_rejected() {
    let x = random_design(20, 1, 0);
    let times: Vec<f64> = (1..=20).map(f64::from).collect();
    assert!(fit_cox_dense(x.view(), &names(1), &times, &[0; 20]).is_err());
}

fn ranking(pairs: &[(&str, f64)]) -> ImportanceRanking {
    ImportanceRanking {
        n_rows: 10,
        entries: pairs
            .iter()
            .enumerate()
            .map(|(index, (f, v))| ImportanceEntry { feature: f.to_string(), index, importance: *v })
            .collect(),
    }
}

#[test]
fn marker_grid_lays_out_markers_by_subgroup() {
    let x = random_design(400, 2, 9);
    let (times, events) = simulate_cox(&x, &[1.5, 0.0], 0.3, 9);
    let fit = fit_cox_dense(x.view(), &["creatinine".into(), "urea".into()], &times, &events).unwrap();
    let women = SubgroupKey::new("women", "STEMI");
    let men = SubgroupKey::new("men", "STEMI");
    let grid = compare_markers(
        &[
            (women.clone(), ranking(&[("creatinine", 1.46), ("urea", 0.2)])),
            (men.clone(), ranking(&[("creatinine", 0.9)])),
        ],
        &[(women, fit.clone()), (men, fit)],
        &["creatinine".into(), "urea".into()],
    )
    .unwrap();
    let md = grid.to_markdown();
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[0], "| Marker | STEMI women SHAP | STEMI women p | STEMI men SHAP | STEMI men p |");
    assert!(lines[2].starts_with("| creatinine | 1.46 | <0.005* |"), "{}", lines[2]);
    assert!(lines[3].starts_with("| urea (one-sided) |"), "{}", lines[3]);
    assert!(grid.rows[1].flag.as_deref().unwrap().contains("no SHAP value in STEMI men"));
    assert_eq!(grid.to_csv().lines().count(), 1 + 2 * 2);
}

#[test]
fn null_markers_are_starred_about_five_percent_of_the_time() {
    let mut starred = 0;
    let trials = 400;
    for seed in 0..trials {
        let x = random_design(300, 1, 20_000 + seed);
        let (times, events) = simulate_cox(&x, &[0.0], 0.3, 30_000 + seed);
        let fit = fit_cox_dense(x.view(), &["null".into()], &times, &events).unwrap();
        let key = SubgroupKey::new("women", "");
        let grid =
            compare_markers(&[(key.clone(), ranking(&[("null", 0.0)]))], &[(key, fit)], &["null".into()])
                .unwrap();
        let cell = &grid.rows[0].cells[0];
        assert_eq!(cell.mean_abs_shap, Some(0.0));
        starred += usize::from(cell.significant);
    }
    let rate = starred as f64 / trials as f64;
    // Binomial(400, 0.05) has sd 0.011; allow three of them.
    assert!((rate - 0.05).abs() < 0.033, "star rate {rate}");
}

#[test]
fn strong_marker_is_concordant_in_shap_and_cox() {
    use riskbench_core::cohort::{build_matrix_fitted_on, split_indices};
    use riskbench_core::models::{class_weights, fit, ModelConfig};
    use riskbench_core::shap::{attribute, feature_importance, sample_background};
    let mut hits = Vec::new();
    for seed in 1..=10u64 {
        let mut cfg = planted_config(Some(2000));
        cfg.planted = serde_json::from_str::<Vec<PlantedTerm>>(
            r#"[{"feature": "urea", "weight": 1.5}, {"feature": "age", "weight": 0.5}]"#,
        )
        .unwrap();
        let out = synth_cohort(&cfg, seed).unwrap();
        let labels: Vec<u8> = out.episodes.iter().map(|e| e.label).collect();
        let split = split_indices(&labels, 0.3, seed).unwrap();
        let (m, _) = build_matrix_fitted_on(&out.episodes, &out.specs, &split.train_rows).unwrap();
        let (train, test) = (m.select_rows(&split.train_rows), m.select_rows(&split.test_rows));
        let model = fit(
            &train,
            &train.labels,
            &class_weights(&train.labels).unwrap(),
            &ModelConfig::gbt_reference().with_seed(seed),
        )
        .unwrap();
        let bg = sample_background(&train, 50, seed).unwrap();
        let attr = attribute(&model, &test, &bg, "train").unwrap().group_by_source(&test.columns).unwrap();
        let ranking = feature_importance(&attr);
        let top = top_markers(&ranking, 10);
        let cols: Vec<usize> =
            test.columns.iter().enumerate().filter(|(_, c)| top.contains(&c.name)).map(|(j, _)| j).collect();
        let covariates = test.select_columns(&cols);
        let times: Vec<f64> = test.survival.iter().map(|t| t.unwrap()).collect();
        let cox = fit_cox(&covariates, &times, &test.labels).unwrap();
        let key = SubgroupKey::new("all", "");
        let grid = compare_markers(&[(key.clone(), ranking.clone())], &[(key, cox)], &top).unwrap();
        let urea = grid.rows.iter().find(|r| r.marker == "urea");
        let ok = ranking.rank_of("urea") == Some(1)
            && urea.is_some_and(|r| r.cells[0].cox_p.is_some_and(|p| p < 0.005));
        hits.push((seed, ok, ranking.rank_of("urea"), urea.and_then(|r| r.cells[0].cox_p)));
    }
    assert!(hits.iter().filter(|h| h.1).count() >= 9, "{hits:?}");
}
