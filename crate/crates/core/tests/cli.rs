//! End-to-end runs of the `genrekit` binary on a small synthetic corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genrekit::corpus::SplitSpec;
use serde_json::Value;

const SMALL: [&str; 6] = [
    "--set",
    "features.word_k=300",
    "--set",
    "features.char_k=600",
    "--set",
    "mlp.hidden=32",
];

fn genrekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genrekit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = genrekit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL).collect()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn fixture(dir: &Path, name: &str, seed: &str) {
    run_ok(dir, &["gen-synthetic", "-o", name, "--docs-per-class", "30", "--seed", seed]);
}

#[test]
fn gen_synthetic_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "a.jsonl", "3");
    fixture(dir.path(), "b.jsonl", "3");
    fixture(dir.path(), "c.jsonl", "4");
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(String::from_utf8(read("a.jsonl")).unwrap().lines().count(), 300);
    assert_eq!(json(dir.path().join("manifest-gen-synthetic.json"))["command"], "gen-synthetic");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "fx.jsonl", "1");
    let code = |args: &[&str]| genrekit(d, args).status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&[]), Some(1));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["evaluate"]), Some(1), "no training corpus");
    assert_eq!(code(&["train", "--train", "fx.jsonl", "--set", "mlp.nope=1"]), Some(1));
    assert_eq!(code(&["train", "--train", "missing.jsonl"]), Some(2));
    assert_eq!(code(&["compare-dist", "missing.csv", "missing.csv"]), Some(2));
    let blowup = with_small(&["train", "--train", "fx.jsonl", "-o", "o", "--set", "logreg.lr=1e300"]);
    assert_eq!(code(&blowup), Some(3));
}

#[test]
fn compare_dist_opposite_samples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.csv"), "label,count\nA1,10\nA4,0\n").unwrap();
    std::fs::write(d.join("b.csv"), "label,count\nA1,0\nA4,10\n").unwrap();
    let out = run_ok(d, &["compare-dist", "a.csv", "b.csv", "-o", "cmp"]);
    let report = json(d.join("cmp/compare_dist.json"));
    assert_eq!(report["result"]["statistic"].as_f64(), Some(20.0));
    assert_eq!(report["result"]["dof"].as_u64(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("20.000"));
}

#[test]
fn train_reuses_artifacts_and_hash_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "fx.jsonl", "1");
    let args = with_small(&["train", "--train", "fx.jsonl", "-o", "out", "--seeds", "0,1"]);
    run_ok(d, &args);
    let first = json(d.join("out/manifest-train.json"));
    run_ok(d, &args);
    let second = json(d.join("out/manifest-train.json"));
    assert_eq!(first["config_hash"], second["config_hash"]);
    assert_eq!(first["artifacts"], second["artifacts"]);

    let rows = json(d.join("out/train.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 6, "three members for each of two seeds");
    for r in &rows {
        let artifact = r["artifact"].as_str().unwrap();
        assert!(d.join("out").join(artifact).exists(), "{artifact}");
    }

    run_ok(d, &with_small(&["train", "--train", "fx.jsonl", "-o", "out", "--seeds", "0,1", "--set", "mlp.epochs=2"]));
    let third = json(d.join("out/manifest-train.json"));
    assert_ne!(first["config_hash"], third["config_hash"]);
}

#[test]
fn tuned_weights_lie_on_simplex() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "fx.jsonl", "2");
    run_ok(d, &with_small(&["tune-ensemble", "--train", "fx.jsonl", "-o", "out"]));
    let report = json(d.join("out/tune_ensemble.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let weights = r["weights"].as_array().unwrap();
        let sum: f64 = weights.iter().map(|w| w[1].as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "{r}");
        assert!(weights.iter().all(|w| w[1].as_f64().unwrap() >= 0.0));
        let best_member = r["member_validation_accuracies"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m[1].as_f64().unwrap())
            .fold(0.0, f64::max);
        assert!(r["validation_accuracy"].as_f64().unwrap() >= best_member);
    }
}

#[test]
fn confide_writes_one_record_per_document() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "fx.jsonl", "5");
    run_ok(d, &with_small(&["confide", "--train", "fx.jsonl", "-o", "out"]));
    let report = json(d.join("out/confide.json"));
    assert_eq!(report["n_samples"], 10);
    let sections = report["sections"].as_array().unwrap();
    assert_eq!(sections.len(), 5, "one per classifier");

    let jsonl = std::fs::read_to_string(d.join("out/confidence/fx__fx__mlp_a.jsonl")).unwrap();
    let records: Vec<Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let held_out = 10 * (30 - SplitSpec::new(0.75, 0).train_count(30));
    assert_eq!(records.len(), held_out);
    for r in &records {
        let c = r["confidence"].as_f64().unwrap();
        assert!((0.1 - 1e-12..=1.0 + 1e-12).contains(&c));
    }
}

#[test]
fn single_seed_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "fx.jsonl", "6");
    let out = run_ok(d, &with_small(&["evaluate", "--train", "fx.jsonl", "-o", "out", "--seeds", "4"]));
    let report = json(d.join("out/evaluate.json"));
    for c in report["sections"][0]["classifiers"].as_array().unwrap() {
        assert_eq!(c["accuracy"]["halfwidth"].as_f64(), Some(0.0));
        assert_eq!(c["accuracy"]["n_seeds"].as_u64(), Some(1));
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("± 0.000"));
}

#[test]
fn every_train_set_meets_every_test_set() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "a.jsonl", "7");
    fixture(d, "b.jsonl", "8");
    fixture(d, "t.jsonl", "9");
    let args = with_small(&[
        "evaluate", "--train", "a.jsonl", "--train", "b.jsonl", "--test", "t.jsonl", "-o", "out", "--set",
        "concat_train=true", "--set", "classifiers=[\"lr\"]",
    ]);
    run_ok(d, &args);
    let report = json(d.join("out/evaluate.json"));
    let pairs: Vec<(String, String)> = report["sections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["train"].as_str().unwrap().to_string(), s["test"].as_str().unwrap().to_string()))
        .collect();
    let expected: Vec<(String, String)> = ["a", "b", "a+b"].iter().map(|t| (t.to_string(), "t".to_string())).collect();
    assert_eq!(pairs, expected);
}

#[test]
fn learning_curve_and_epoch_sweep_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d, "fx.jsonl", "10");
    run_ok(
        d,
        &with_small(&["learning-curve", "--train", "fx.jsonl", "-o", "out", "--seeds", "0,1", "--set", "learning_curve.fractions=[0.5,1.0]"]),
    );
    let curve = json(d.join("out/learning_curve.json"));
    let points = curve[0]["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["per_seed"].as_array().unwrap().len(), 2);
    assert!(d.join("out/learning_curve/fx__fx.csv").exists());

    run_ok(d, &with_small(&["epoch-sweep", "--train", "fx.jsonl", "-o", "out", "--set", "epoch_sweep.max_epochs=5"]));
    let sweep = json(d.join("out/epoch_sweep.json"));
    assert_eq!(sweep[0]["sweep"]["rows"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(d.join("out/epoch_sweep/fx.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}
