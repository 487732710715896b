use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfu_core::dataset::{synth_shift_pair, SynthConfig};
use tempfile::TempDir;

fn cfu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    cfu(&args)
}

const SMALL_SYNTH: &str = r#"{"kind": "synth", "n_train": 600, "n_test": 200, "dim": 6}"#;

fn small_config(extra: &str) -> String {
    format!(r#"{{"seed": 3, "dataset": {SMALL_SYNTH}, "mc": {{"passes": 20}}, "output_dir": "out"{extra}}}"#)
}

#[test]
fn missing_dataset_path_is_a_usage_error_without_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"seed": 1, "dataset": {"kind": "csv", "train": "nope.csv", "test": "nope.csv"}, "output_dir": "out"}"#,
    );
    for cmd in ["train", "exp1", "exp2"] {
        let out = run(cmd, &cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn syntax_errors_report_line_and_column() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{\n  \"seed\": 1,\n  \"dataset\": {,\n}");
    let out = run("train", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn seed_is_mandatory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"dataset": {"kind": "synth"}}"#);
    assert_eq!(run("train", &cfg, &[]).status.code(), Some(2));
}

#[test]
fn train_reaches_high_accuracy_on_separated_blobs_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"seed": 11, "dataset": {"kind": "synth", "n_train": 1500, "n_test": 500, "class_separation": 3.0}, "output_dir": "a"}"#,
    );
    let out = run("train", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/metrics.json")).unwrap()).unwrap();
    assert!(metrics["test_accuracy"].as_f64().unwrap() >= 0.95, "{metrics}");
    assert_eq!(metrics["config"]["seed"], 11);
    for f in ["checkpoint.bin", "manifest.json", "run.log"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    let first = fs::read(dir.path().join("a/metrics.json")).unwrap();
    let ckpt = fs::read(dir.path().join("a/checkpoint.bin")).unwrap();
    assert!(run("train", &cfg, &[]).status.success());
    assert_eq!(first, fs::read(dir.path().join("a/metrics.json")).unwrap());
    assert_eq!(ckpt, fs::read(dir.path().join("a/checkpoint.bin")).unwrap());
}

#[test]
fn seed_override_changes_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    assert!(run("train", &cfg, &["--out", dir.path().join("a").to_str().unwrap()]).status.success());
    assert!(run("train", &cfg, &["--out", dir.path().join("b").to_str().unwrap(), "--seed", "4"]).status.success());
    let a: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/metrics.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("b/metrics.json")).unwrap()).unwrap();
    assert_eq!(b["config"]["seed"], 4);
    assert_ne!(a["loss_history"], b["loss_history"]);
}

#[test]
fn exp1_without_shift_still_reports_a_p_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"seed": 5, "dataset": {"kind": "synth", "n_train": 600, "n_test": 200, "dim": 6, "shift": 0.0}, "mc": {"passes": 10}}"#,
    );
    let out = run("exp1", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/summary.json")).unwrap()).unwrap();
    let p = s["wilcoxon_trust"]["p"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(s["reference"]["flagged_mean_trust"], 0.971);
    for f in ["scores_in.csv", "scores_ood.csv"] {
        let text = fs::read_to_string(dir.path().join("out").join(f)).unwrap();
        assert!(text.starts_with("id,softmax,mc_mean,mc_std,epistemic,aleatoric,trust,lof,lof_flag\n"));
        assert_eq!(text.lines().count(), 201);
    }
}

#[test]
fn thread_cap_does_not_change_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    assert!(run("exp1", &cfg, &[]).status.success());
    let wide = fs::read(dir.path().join("out/scores_ood.csv")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfu"))
        .args(["exp1", "--config", cfg.to_str().unwrap()])
        .env("CFU_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(wide, fs::read(dir.path().join("out/scores_ood.csv")).unwrap());
    let bad = Command::new(env!("CARGO_BIN_EXE_cfu"))
        .args(["exp1", "--config", cfg.to_str().unwrap()])
        .env("CFU_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exp2_with_perfect_classifier_reports_an_empty_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"seed": 2, "dataset": {"kind": "synth", "n_train": 300, "n_test": 100, "dim": 4, "classes": 2, "class_separation": 20.0}, "mc": {"passes": 10}}"#,
    );
    let out = run("exp2", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(s["misclassified"], 0);
    assert!(s["table"].as_array().unwrap().is_empty());
    assert!(s["notice"].as_str().unwrap().contains("no misclassified"));
    assert_eq!(s["reference"][2]["trust"], 1.18);
    assert_eq!(fs::read_to_string(dir.path().join("out/cf_records.jsonl")).unwrap(), "");
}

#[test]
fn exp2_records_every_method_per_query() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &small_config(r#", "counterfactual": {"max_queries": 4, "autoencoder": {"epochs": 20}}"#),
    );
    let out = run("exp2", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<serde_json::Value> = fs::read_to_string(dir.path().join("out/cf_records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 12);
    for r in &records {
        assert_ne!(r["y"], r["y_pred"]);
        if r["valid"].as_bool().unwrap() {
            assert_ne!(r["y_cf"], r["y_pred"]);
        }
        assert!(r.get("x_cf").is_none());
    }
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/summary.json")).unwrap()).unwrap();
    let methods: Vec<&str> = s["table"].as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["nun", "wachter", "proto"]);
}

#[test]
fn checkpoint_from_train_is_reused() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    assert!(run("train", &cfg, &[]).status.success());
    let reuse = write_config(dir.path(), "r.json", &small_config(r#", "checkpoint": "out/checkpoint.bin""#));
    let out = run("exp1", &reuse, &["--out", dir.path().join("r").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("r/checkpoint.bin").exists());
    assert_eq!(run("train", &reuse, &[]).status.code(), Some(2));
}

#[test]
fn empty_instance_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    for (name, body) in [("empty.csv", ""), ("header.csv", "a,b,c,d,e,f\n")] {
        let inst = write_config(dir.path(), name, body);
        let out = run("score", &cfg, &["--instances", inst.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn dimension_mismatch_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config(""));
    let inst = write_config(dir.path(), "i.csv", "a,b\n0.1,0.2\n");
    assert_eq!(run("score", &cfg, &["--instances", inst.to_str().unwrap()]).status.code(), Some(2));
}

fn synth_rows_csv(cfg: &SynthConfig, ood: bool, rows: usize) -> String {
    let splits = synth_shift_pair(cfg).unwrap();
    let data = if ood { &splits.ood } else { &splits.train };
    let mut text: String = (0..data.dim()).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in data.rows().take(rows) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    text
}

fn read_scores(path: &Path) -> Vec<(f64, f64)> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .deserialize::<std::collections::HashMap<String, String>>()
        .map(|r| {
            let r = r.unwrap();
            (r["softmax"].parse().unwrap(), r["trust"].parse().unwrap())
        })
        .collect()
}

#[test]
fn training_points_score_huge_trust_with_one_neighbour() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"seed": 3, "dataset": {"kind": "synth", "n_train": 600, "n_test": 200, "dim": 6, "class_separation": 3.0}, "trust": {"k": 1}, "mc": {"passes": 10}}"#,
    );
    let synth = SynthConfig {
        seed: 3,
        n_train: 600,
        n_test: 200,
        dim: 6,
        class_separation: 3.0,
        ..SynthConfig::default()
    };
    let inst = write_config(dir.path(), "i.csv", &synth_rows_csv(&synth, false, 20));
    let out = run("score", &cfg, &["--instances", inst.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scores = read_scores(&dir.path().join("out/scores.csv"));
    assert_eq!(scores.len(), 20);
    // a training point predicted as its own label sits at distance 0 from its class
    let high = scores.iter().filter(|s| s.1 > 1e6).count();
    assert!(high >= 15, "{scores:?}");
}

#[test]
fn some_shifted_point_is_confident_yet_untrusted() {
    let dir = TempDir::new().unwrap();
    let mut found = None;
    'search: for shift in [3.0, 2.0] {
        for seed in 1..=6u64 {
            let body = format!(
                r#"{{"seed": {seed}, "dataset": {{"kind": "synth", "shift": {shift:?}}}, "output_dir": "out"}}"#
            );
            let cfg = write_config(dir.path(), "c.json", &body);
            let synth = SynthConfig {
                seed,
                shift,
                ..SynthConfig::default()
            };
            let inst = write_config(dir.path(), "ood.csv", &synth_rows_csv(&synth, true, usize::MAX));
            let out = run("score", &cfg, &["--instances", inst.to_str().unwrap()]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let scores = read_scores(&dir.path().join("out/scores.csv"));
            if let Some(hit) = scores.iter().find(|(softmax, trust)| *softmax > 0.95 && *trust < 1.0) {
                found = Some((shift, seed, *hit));
                break 'search;
            }
        }
    }
    assert!(found.is_some(), "no shifted point with softmax > 0.95 and trust < 1");
}
