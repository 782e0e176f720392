use std::fs;
use std::process::Command;

mod common;

use common::{nilm, ok, run_all_commands, s};

#[test]
fn detect_on_three_line_file_writes_no_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tiny.csv");
    fs::write(&csv, "timestamp,value\n0,250\n60,252\n").unwrap();
    let out = dir.path().join("events.csv");
    ok(&["detect", "--csv", s(&csv), "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, vec!["index,timestamp,delta_w,pre_level_w"]);
}

#[test]
fn train_without_dataset_fails_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model");
    let out = nilm(&["train", "--dataset", s(&dir.path().join("missing")), "--out", s(&model)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_flags_are_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = nilm(&["simulate", "--days", "0", "--out", s(&data)]);
    assert!(!out.status.success());
    assert!(!data.exists());
    let out = nilm(&["--threads", "0", "simulate", "--days", "1", "--out", s(&data)]);
    assert!(!out.status.success());
    let out = nilm(&["train", "--pipeline", "lstm", "--dataset", s(&data), "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = nilm(&["--json", "detect", "--csv", s(&dir.path().join("none.csv")), "--out", s(&dir.path().join("e.csv"))]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_array());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("house");
    ok(&["simulate", "--days", "2", "--seed", "3", "--out", s(&data)]);
    let out = Command::new(env!("CARGO_BIN_EXE_nilm"))
        .args(["--json", "detect", "--out", s(&dir.path().join("ev.csv"))])
        .env("NILM_DATA_DIR", &data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "detect");
    assert!(v["events"].as_u64().unwrap() > 0);
}

#[test]
fn every_command_is_byte_for_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_all_commands(&dir.path().join("a"), "iterative");
    let second = run_all_commands(&dir.path().join("b"), "iterative");
    assert_eq!(first.0.iter().map(|f| &f.0).collect::<Vec<_>>(), second.0.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (fa, fb) in first.0.iter().zip(&second.0) {
        assert!(fa.1 == fb.1, "{} differs between runs", fa.0);
    }
    let (files, table) = first;
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    for expected in ["model/model.json", "model/dishwasher_stage3.ckpt", "pred/phase2.csv", "pred/profiles.csv", "report.json", "report.csv", "prep/train/manifest.json"] {
        assert!(names.contains(&expected), "missing {expected} in {names:?}");
    }
    assert!(table.contains("dishwasher") && table.contains("average"));
    let report: serde_json::Value = serde_json::from_slice(&files.iter().find(|f| f.0 == "report.json").unwrap().1).unwrap();
    assert_eq!(report["config"]["pipeline"], "iterative");
    assert_eq!(report["config"]["phase2"]["train"]["seed"], 4);
}

#[test]
fn knn_only_model_reloads_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--days", "30", "--seed", "2", "--out", s(&data)]);
    ok(&["train", "--dataset", s(&data), "--pipeline", "knn-only", "--out", s(&dir.path().join("m"))]);
    let out = ok(&["--json", "evaluate", "--model", s(&dir.path().join("m")), "--dataset", s(&data), "--out", s(&dir.path().join("r.json"))]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert!(v["average_f"].as_f64().unwrap() > 0.5);
    let csv = ok(&["report", "--input", s(&dir.path().join("r.json")), "--format", "csv"]);
    assert!(csv.starts_with("appliance,signal,granularity"));
}
