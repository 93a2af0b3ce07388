use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const PRIMARY: [&str; 9] = [
    "cohort.csv",
    "cohort.truth.json",
    "tuning.json",
    "model.json",
    "training_log.json",
    "evaluation.json",
    "roc.svg",
    "attributions.csv",
    "markers.md",
];

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

/// The shipped demo config with its paths made absolute and `patch` merged in.
fn config(dir: &Path, patch: Value) -> PathBuf {
    let mut c: Value =
        serde_json::from_str(&std::fs::read_to_string(demo_dir().join("run.json")).unwrap()).unwrap();
    c["synth"] = json!(demo_dir().join("planted_cohort.json"));
    c["output_dir"] = json!(dir.join("out"));
    for (k, v) in patch.as_object().unwrap() {
        c[k] = v.clone();
    }
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    path
}

fn riskbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskbench")).args(args).env_remove("RISKBENCH_THREADS").output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = riskbench(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn data(path: &Path) -> Value {
    let v: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    v["data"].clone()
}

#[test]
fn synth_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let c = config(d.path(), json!({}));
        run_ok(&["synth", "-c", c.to_str().unwrap(), "--seed", "7"]);
    }
    let (x, y) = (read_dir(&a.path().join("out")), read_dir(&b.path().join("out")));
    assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
    // The config hash differs between the two directories only through
    // output_dir, so compare the cohort rows below the stamp line.
    let rows = |m: &BTreeMap<String, Vec<u8>>| {
        String::from_utf8(m["cohort.csv"].clone())
            .unwrap()
            .lines()
            .skip(1)
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(rows(&x), rows(&y));
    assert_eq!(data(&a.path().join("out/cohort.truth.json")), data(&b.path().join("out/cohort.truth.json")));

    run_ok(&["synth", "-c", a.path().join("run.json").to_str().unwrap(), "--seed", "7"]);
    assert_eq!(read_dir(&a.path().join("out")), x);
}

#[test]
fn synth_seed_changes_the_cohort() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), json!({}));
    run_ok(&["synth", "-c", c.to_str().unwrap(), "--seed", "7"]);
    let first = std::fs::read(d.path().join("out/cohort.csv")).unwrap();
    run_ok(&["synth", "-c", c.to_str().unwrap(), "--seed", "8"]);
    assert_ne!(first, std::fs::read(d.path().join("out/cohort.csv")).unwrap());
}

#[test]
fn paper_grids_enumerate_published_sizes() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), json!({}));
    for (learner, n) in [("gbt", 1080), ("lr", 21), ("svm", 14), ("rf", 9)] {
        run_ok(&["tune", "-c", c.to_str().unwrap(), "--paper-grid", learner, "--enumerate-only"]);
        let t = data(&d.path().join("out/tuning.json"));
        assert_eq!(t["grid_size"], n, "{learner}");
        assert_eq!(t["configs"].as_array().unwrap().len(), n, "{learner}");
    }
}

#[test]
fn full_run_writes_stamped_artifacts_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), json!({}));
    let synth_before = std::fs::read(demo_dir().join("planted_cohort.json")).unwrap();
    run_ok(&["run", "-c", c.to_str().unwrap(), "-q"]);
    let files = read_dir(&d.path().join("out"));
    for name in PRIMARY {
        assert!(files.contains_key(name), "missing {name}");
    }

    let manifest: Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let listed = manifest["artifacts"].as_object().unwrap();
    assert_eq!(listed.len() + 1, files.len());
    for (name, digest) in listed {
        assert_eq!(digest.as_str().unwrap(), hex::encode(Sha256::digest(&files[name])), "{name}");
        let text = String::from_utf8(files[name].clone()).unwrap();
        assert!(text.contains(&hash), "{name} lacks the config hash");
        assert!(text.contains(env!("CARGO_PKG_VERSION")), "{name} lacks the version");
    }

    let eval = data(&d.path().join("out/evaluation.json"));
    assert!(eval["report"]["auc"].as_f64().unwrap() > 0.8);
    assert!(eval["grace"]["report"]["auc"].as_f64().is_some());
    assert!(eval["report"]["cross_validation"].is_object());
    let markers = String::from_utf8(files["markers.md"].clone()).unwrap();
    assert!(markers.contains(
        "| Marker | synthetic female SHAP | synthetic female p | synthetic male SHAP | synthetic male p |"
    ));
    assert_eq!(std::fs::read(demo_dir().join("planted_cohort.json")).unwrap(), synth_before);
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let c =
        config(d.path(), json!({"grid": null, "model": {"learner": "rf", "n_trees": 30, "max_depth": 4}}));
    let c = c.to_str().unwrap();
    run_ok(&["run", "-c", c, "-q", "--threads", "1"]);
    let one = read_dir(&d.path().join("out"));
    std::fs::remove_dir_all(d.path().join("out")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_riskbench"))
        .args(["run", "-c", c, "-q"])
        .env("RISKBENCH_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_dir(&d.path().join("out")), one);
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let out = riskbench(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(riskbench(&["--help"]).status.code(), Some(0));
    assert_eq!(riskbench(&["--version"]).status.code(), Some(0));
}

#[test]
fn explain_before_train_names_the_missing_model() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), json!({}));
    run_ok(&["synth", "-c", c.to_str().unwrap()]);
    let out = riskbench(&["explain", "-c", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.json"));

    let out = riskbench(&["compare", "-c", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subgroups.json"));
}

#[test]
fn train_without_model_or_tuning_names_tuning_report() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), json!({}));
    run_ok(&["synth", "-c", c.to_str().unwrap()]);
    let out = riskbench(&["train", "-c", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tuning.json"));
}

#[test]
fn invalid_configs_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("absent.json");
    assert_eq!(riskbench(&["run", "-c", missing.to_str().unwrap()]).status.code(), Some(1));

    let c = config(d.path(), json!({"test_fraction": 1.5}));
    assert_eq!(riskbench(&["run", "-c", c.to_str().unwrap()]).status.code(), Some(1));

    let c = config(d.path(), json!({"cohort": "does/not/exist.csv"}));
    let out = riskbench(&["train", "-c", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does/not/exist.csv"));

    let c = config(d.path(), json!({"unknown_key": 1}));
    assert_eq!(riskbench(&["run", "-c", c.to_str().unwrap()]).status.code(), Some(1));

    // Seeds are mandatory; there is no clock-based default.
    let c = config(d.path(), json!({"seeds": {"synth": 1}}));
    assert_eq!(riskbench(&["run", "-c", c.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn json_logging_emits_json_lines() {
    let d = tempfile::tempdir().unwrap();
    let c = config(d.path(), json!({}));
    let out = run_ok(&["synth", "-c", c.to_str().unwrap(), "--json"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(!stderr.is_empty());
    for line in stderr.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["level"].is_string() && v["message"].is_string());
    }
}

#[test]
fn cohort_with_long_format_series_trains() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let mut wide = String::from("episode_id,sex,age,los_days,label,survival_days,shock\n");
    let mut series = String::from("episode_id,feature,timestamp,value\n");
    for i in 0..80 {
        let label = u8::from(i % 4 == 0);
        let sex = if i % 3 == 0 { "female" } else { "male" };
        wide.push_str(&format!(
            "e{i},{sex},{},{},{label},{},{}\n",
            50 + i % 30,
            2 + i % 5,
            10 + i % 7,
            i % 2
        ));
        for t in 0..3 {
            series.push_str(&format!(
                "e{i},lactate,{t},{}\n",
                1.0 + f64::from(label) * 2.0 + f64::from(t) * 0.1 + f64::from(i % 5) * 0.3
            ));
        }
    }
    std::fs::write(dir.join("wide.csv"), wide).unwrap();
    std::fs::write(dir.join("series.csv"), series).unwrap();
    let spec = json!([
        {"name": "sex", "kind": "static-categorical", "clinical_set": "demographic"},
        {"name": "age", "kind": "static-numeric", "clinical_set": "demographic", "unit": "years"},
        {"name": "shock", "kind": "binary-flag", "clinical_set": "complications"},
        {"name": "lactate", "kind": "dynamic-numeric", "clinical_set": "blood-gas", "unit": "mmol/L"}
    ]);
    std::fs::write(dir.join("spec.json"), spec.to_string()).unwrap();
    let c = config(
        dir,
        json!({
            "synth": null, "grid": null,
            "cohort": "wide.csv", "series": "series.csv", "spec": "spec.json",
            "model": {"learner": "lr"},
            "stages": {"train": true, "evaluate": true, "explain": false, "compare": false}
        }),
    );
    run_ok(&["run", "-q", "-c", c.to_str().unwrap()]);
    let log = data(&dir.join("out/training_log.json"));
    assert_eq!(log["n_train"], 64);
    assert_eq!(log["n_test"], 16);
    let model = data(&dir.join("out/model.json"));
    let names: Vec<&str> =
        model["feature_names"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(names.contains(&"lactate@mean"), "{names:?}");
    // GRACE markers are absent from this cohort, so no comparison is attempted.
    assert!(data(&dir.join("out/evaluation.json"))["grace"].is_null());
}
