//! Black-box tests of the command-line binary: artifact round trips,
//! determinism, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poisonlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawning the binary")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// 80-sample separable two-class fixture in JSONL form.
fn write_fixture(path: &Path) {
    let mut lines = String::new();
    for i in 0..80 {
        let (feat, label) = if i % 2 == 0 { ("ca", "pos") } else { ("cb", "neg") };
        // uniq{i} keeps every sample's most-suspicious token label-neutral, so
        // the defend smoke tests do not flag the class features themselves
        lines.push_str(&format!(
            "{{\"id\":\"s{i:03}\",\"text\":\"{feat} uniq{i} filler tail\",\"label\":\"{label}\"}}\n"
        ));
    }
    std::fs::write(path, lines).unwrap();
}

fn write_config(path: &Path, train: &Path, with_attack: bool) {
    let attack = if with_attack {
        r#","attack": {"specs": [{"word": "trig", "position": "random", "target_label": "pos"}],
                       "per_trigger_ratio": 0.05, "seed": 11}"#
    } else {
        ""
    };
    let json = format!(
        r#"{{"train_path": {:?}, "seed": 5{attack}}}"#,
        train.to_str().unwrap()
    );
    std::fs::write(path, json).unwrap();
}

#[test]
fn poison_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let config = dir.path().join("config.json");
    write_fixture(&train);
    write_config(&config, &train, true);

    for out_name in ["run1", "run2"] {
        let out = run(&[
            "poison",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join(out_name).to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
    for artifact in ["poisoned.jsonl", "ledger.json"] {
        let a = std::fs::read(dir.path().join("run1").join(artifact)).unwrap();
        let b = std::fs::read(dir.path().join("run2").join(artifact)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
    // the ledger reloads and accounts for round(0.05 * 80) = 4 samples
    let ledger: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run1/ledger.json")).unwrap())
            .unwrap();
    assert_eq!(ledger["entries"].as_array().unwrap().len(), 4);
}

#[test]
fn poison_without_attack_plan_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let config = dir.path().join("config.json");
    write_fixture(&train);
    write_config(&config, &train, false);
    let out = run(&[
        "poison",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("attack"));
}

#[test]
fn missing_train_file_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--train",
        dir.path().join("nope.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = run(&["train", "--bogus-flag"]);
    assert_code(&out, 1);
}

#[test]
fn invalid_threads_env_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    write_fixture(&train);
    let out = bin()
        .args(["train", "--train", train.to_str().unwrap()])
        .env("POISONLAB_THREADS", "lots")
        .output()
        .unwrap();
    assert_code(&out, 1);
}

#[test]
fn train_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    write_fixture(&train);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--test",
        train.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let model = out_dir.join("model.json");
    assert!(model.exists() && out_dir.join("metrics.json").exists());
    // separable fixture → perfect accuracy on itself
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy 1.0000"));

    let out = run(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--test",
        train.to_str().unwrap(),
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_code(&out, 0);
}

#[test]
fn sweep_fit_recovers_exact_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    // points exactly on y = 0.1x + 0.05
    std::fs::write(
        &csv,
        "word,rho,min_ratio\nw1,0.1,0.06\nw2,0.2,0.07\nw3,0.3,0.08\nw4,0.4,0.09\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--input",
        csv.to_str().unwrap(),
        "--fit",
        "--bins",
        "4",
        "--safety",
        "1.0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let bound: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("bound.json")).unwrap()).unwrap();
    assert!((bound["k"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    assert!((bound["b"].as_f64().unwrap() - 0.05).abs() < 1e-9);
    // the sweep CSV is re-emitted alongside the bound
    assert!(out_dir.join("sweep.csv").exists());
}

#[test]
fn defend_writes_all_artifacts_and_report_flattens() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let config = dir.path().join("config.json");
    write_fixture(&train);
    write_config(&config, &train, true);
    let poison_dir = dir.path().join("poison");
    assert_code(
        &run(&[
            "poison",
            "--config",
            config.to_str().unwrap(),
            "--out",
            poison_dir.to_str().unwrap(),
        ]),
        0,
    );

    let defend_dir = dir.path().join("defend");
    let out = run(&[
        "defend",
        "--train",
        poison_dir.join("poisoned.jsonl").to_str().unwrap(),
        "--test",
        train.to_str().unwrap(),
        "--ledger",
        poison_dir.join("ledger.json").to_str().unwrap(),
        "--out",
        defend_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    for artifact in [
        "triggers.csv",
        "sanitization.json",
        "sanitized.jsonl",
        "model.json",
        "report.json",
    ] {
        assert!(defend_dir.join(artifact).exists(), "missing {artifact}");
    }
    // paper-default bound is echoed in the report
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(defend_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["bound"][0].as_f64(), Some(0.092));
    assert_eq!(report["bound"][1].as_f64(), Some(0.15));
    assert!(report["trigger_detection"].is_object());

    let report_dir = dir.path().join("report");
    let out = run(&[
        "report",
        "--input",
        defend_dir.join("report.json").to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let csv = std::fs::read_to_string(report_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("metric,value\n"));
}

#[test]
fn defense_only_mode_omits_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    write_fixture(&train);
    let defend_dir = dir.path().join("defend");
    let out = run(&[
        "defend",
        "--train",
        train.to_str().unwrap(),
        "--out",
        defend_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(defend_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(report["trigger_detection"].is_null());
    assert!(report["deletion"].is_null());
    assert!(report["predicted_triggers"].is_array());
}

#[test]
fn lfr_scan_reports_exact_cost() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    write_fixture(&train);
    let model_dir = dir.path().join("model");
    assert_code(
        &run(&[
            "train",
            "--train",
            train.to_str().unwrap(),
            "--out",
            model_dir.to_str().unwrap(),
        ]),
        0,
    );
    let scan_dir = dir.path().join("scan");
    let out = run(&[
        "lfr-scan",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model_dir.join("model.json").to_str().unwrap(),
        "--words",
        "ca,cb,filler",
        "--n-samples",
        "20",
        "--out",
        scan_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let scan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scan_dir.join("scan.json")).unwrap()).unwrap();
    // |vocab| * n_samples * |labels| = 3 * 20 * 2
    assert_eq!(scan["model_calls"].as_u64(), Some(120));
    assert!(scan_dir.join("flagged.txt").exists());
}

#[test]
fn onion_with_infinite_threshold_keeps_every_token() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    write_fixture(&train);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "onion",
        "--train",
        train.to_str().unwrap(),
        "--delta",
        "inf",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("deleted 0 tokens"));
    let cleaned = std::fs::read_to_string(out_dir.join("cleaned.jsonl")).unwrap();
    assert_eq!(cleaned.lines().count(), 80);
}
