use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn framegraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framegraph"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = framegraph(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small dataset plus a config shrinking the model to match it.
fn setup(dir: &Path) {
    ok(dir, &["synth", "--output", "data/small.json", "--videos", "6", "--frames", "30-40", "--feature-dim", "12", "--seed", "4"]);
    fs::write(
        dir.join("small.cfg.json"),
        r#"{"splits": 2, "train": {"epochs": 3, "learning_rate": 0.005, "model": {"input_dim": 12, "hidden_dim": 6, "window": 3}}}"#,
    )
    .unwrap();
}

const COMMON: [&str; 4] = ["--dataset", "data/small.json", "--config", "small.cfg.json"];

fn with<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    extra.iter().copied().chain(COMMON).collect()
}

#[test]
fn train_eval_summarize_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);

    let table = ok(dir, &with(&["train", "--out-dir", "run", "--seed", "11"]));
    assert!(table.starts_with("method"));
    for f in ["splits.json", "train_config.json", "train_report.csv", "train_report.json"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    for s in ["split_1", "split_2"] {
        for f in ["model.json", "model.bin", "history.csv", "eval.csv"] {
            assert!(dir.join("run").join(s).join(f).exists(), "{s}/{f}");
        }
        let history = fs::read_to_string(dir.join("run").join(s).join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 4);
    }
    // the persisted config carries the flag, file and default layers
    let cfg = json(&dir.join("run/train_config.json"));
    assert_eq!(cfg["train"]["seed"], 11);
    assert_eq!(cfg["train"]["epochs"], 3);
    assert_eq!(cfg["train"]["weight_decay"], 0.0001);
    let csv = fs::read_to_string(dir.join("run/train_report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("split,tau,rho,f1"));
    assert!(csv.lines().last().unwrap().starts_with("MEAN,"));

    // evaluating the checkpoints reproduces the training report
    ok(dir, &with(&["eval", "--out-dir", "run", "--seed", "11"]));
    let train = json(&dir.join("run/train_report.json"));
    let eval = json(&dir.join("run/eval_model.json"));
    assert_eq!(train["summary"], eval["summary"]);

    // ground truth as the prediction is a perfect ranking
    ok(dir, &with(&["eval", "--source", "gt", "--out-dir", "run", "--seed", "11"]));
    let gt = json(&dir.join("run/eval_gt.json"));
    assert_eq!(gt["summary"]["tau"], 1.0);
    assert_eq!(gt["summary"]["rho"], 1.0);

    ok(dir, &with(&["summarize", "--out-dir", "run", "--checkpoint", "run/split_1/model.json", "--video", "video_3"]));
    let curve = fs::read_to_string(dir.join("run/summary_video_3.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("frame,score,selected,gt_score,gt_selected"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let summary = json(&dir.join("run/summary_video_3.json"));
    assert_eq!(rows.len() as u64, summary["summary"]["mask_length"].as_u64().unwrap());
    let selected = rows.iter().filter(|r| r[2] == "1").count() as u64;
    assert!(selected <= summary["summary"]["budget"].as_u64().unwrap());
    assert!(rows.iter().all(|r| r[2] == "0" || r[2] == "1"));
}

#[test]
fn training_is_deterministic_under_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    ok(dir, &with(&["train", "--out-dir", "a", "--seed", "3"]));
    ok(dir, &with(&["train", "--out-dir", "b", "--seed", "3"]));
    for f in ["train_report.json", "split_1/model.bin", "split_2/history.csv"] {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_cell_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let out = ok(dir, &with(&["sweep", "--out-dir", "sw", "--windows", "2", "--lrs", "0.01", "--repeats", "1"]));
    let csv = fs::read_to_string(dir.join("sw/sweep.csv")).unwrap();
    assert_eq!(out, csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "window,learning_rate,runs,tau_mean,tau_std");
    assert!(lines[1].starts_with("2,0.01,2,"));
    assert!(dir.join("sw/sweep_config.json").exists());
}

#[test]
fn profile_reports_parameter_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["profile", "--out-dir", "p", "--frames", "60", "--repeats", "1"]);
    let report = json(&dir.join("p/profile.json"));
    assert_eq!(report["parameters"], 853_120);
    let mb = report["parameter_mb"].as_f64().unwrap();
    assert!((mb - 3.52).abs() / 3.52 < 0.2);
    assert!(dir.join("p/profile_config.json").exists());
}

#[test]
fn invalid_config_is_a_usage_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let cases: [(&[&str], &str); 4] = [
        (&["train", "--lr", "0"], "learning_rate"),
        (&["train", "--t-window", "-1"], "window"),
        (&["sweep", "--repeats", "0"], "sweep.repeats"),
        (&["eval", "--splits", "0"], "splits"),
    ];
    for (args, field) in cases {
        let out = framegraph(dir, &with(args));
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("`{field}`")), "{args:?}: {err}");
    }
    fs::write(dir.join("bad.json"), r#"{"train": {"epochs": "many"}}"#).unwrap();
    let out = framegraph(dir, &["train", "--dataset", "data/small.json", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.epochs"));

    let missing = framegraph(dir, &["train"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("dataset"));

    let gone = framegraph(dir, &["train", "--dataset", "nope.json"]);
    assert_eq!(gone.status.code(), Some(1));
}
