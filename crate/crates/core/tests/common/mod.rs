#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nilm::config::PipelineConfig;
use nilm::lstm::{bce_loss, lstm_backward, lstm_forward, LstmConfig, LstmModel, Window};
use nilm::pipeline::PipelineKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean BCE of one sequence, with the dropout masks fixed by `mask_seed`.
fn loss(model: &LstmModel, x: &[f64], y: &[f64], mask_seed: u64) -> f64 {
    let (out, _) = lstm_forward(model, x, true, &mut ChaCha8Rng::seed_from_u64(mask_seed)).unwrap();
    bce_loss(&out, y).unwrap().0
}

/// Largest relative difference between the analytic gradient and central
/// differences with step `h`, over every parameter of a random network.
///
/// The relative error uses `max(|analytic|, |numeric|, 1e-6)` as denominator so
/// that parameters with vanishing gradients are judged on absolute error.
pub fn gradient_check(seed: u64, cfg: LstmConfig, steps: usize, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LstmModel::new(cfg, &mut rng).unwrap();
    // Zero-initialised FC biases put the ReLU exactly on its kink whenever
    // dropout removes every LSTM unit at a step; random biases avoid that.
    for b in model.params.b_fc.iter_mut().chain(model.params.b_out.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let x: Vec<f64> = (0..steps * cfg.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..steps * cfg.output_dim).map(|_| f64::from(rng.random_bool(0.5))).collect();
    let mask_seed = seed ^ 0xabcd;

    let (out, cache) = lstm_forward(&model, &x, true, &mut ChaCha8Rng::seed_from_u64(mask_seed)).unwrap();
    let (_, grad_out) = bce_loss(&out, &y).unwrap();
    let grads = lstm_backward(&model, &cache, &grad_out).unwrap();

    let mut worst: f64 = 0.0;
    for k in 0..model.params.len() {
        let orig = model.params.get(k);
        model.params.set(k, orig + h);
        let up = loss(&model, &x, &y, mask_seed);
        model.params.set(k, orig - h);
        let down = loss(&model, &x, &y, mask_seed);
        model.params.set(k, orig);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(k);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// The small configurations of the gradient check: LSTM width from {2, 4, 8},
/// sequence length from {2, 5, 10}, other sizes and dropout drawn at random.
pub fn random_configs(n: usize, seed: u64) -> Vec<(u64, LstmConfig, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let cfg = LstmConfig {
                input_dim: rng.random_range(1..=3),
                lstm_units: [2, 4, 8][rng.random_range(0..3)],
                fc_units: rng.random_range(2..=6),
                output_dim: rng.random_range(1..=2),
                dropout_p: if rng.random_bool(0.5) { 0.0 } else { 0.3 },
                init_range: 0.5,
            };
            (seed + i as u64, cfg, [2, 5, 10][rng.random_range(0..3)])
        })
        .collect()
}

/// Windows of random bits whose target is the input from two steps earlier.
pub fn delay_windows(n: usize, len: usize, seed: u64) -> Vec<Window> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..len).map(|_| f64::from(rng.random_bool(0.5))).collect();
            let y = (0..len).map(|t| if t >= 2 { x[t - 2] } else { 0.0 }).collect();
            Window { inputs: x, targets: y }
        })
        .collect()
}

pub fn nilm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilm")).args(args).env_remove("NILM_DATA_DIR").output().expect("run nilm")
}

pub fn ok(args: &[&str]) -> String {
    let out = nilm(args);
    assert!(out.status.success(), "nilm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, relative path and contents, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// A desk configuration with tiny networks so LSTM commands finish quickly.
pub fn quick_config(dir: &Path) -> PathBuf {
    let mut cfg = PipelineConfig::desk(PipelineKind::Parallel);
    cfg.phase2.lstm.lstm_units = 8;
    cfg.phase2.lstm.fc_units = 4;
    cfg.phase2.train.epochs = 2;
    cfg.phase2.window.stride = 60;
    let path = dir.join("quick.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

/// Runs simulate, detect, preprocess, train, infer, evaluate and report into
/// `dir` with fixed seeds and a tiny network; returns every artifact and the
/// rendered report table.
pub fn run_all_commands(dir: &Path, pipeline: &str) -> (Vec<(String, Vec<u8>)>, String) {
    fs::create_dir_all(dir).unwrap();
    let cfg = quick_config(dir);
    let data = dir.join("data");
    ok(&["simulate", "--days", "30", "--seed", "1", "--out", s(&data)]);
    ok(&["detect", "--dataset", s(&data), "--out", s(&dir.join("events.csv"))]);
    ok(&["preprocess", "--dataset", s(&data), "--split", "--out", s(&dir.join("prep"))]);
    ok(&["--threads", "2", "train", "--dataset", s(&data), "--pipeline", pipeline, "--config", s(&cfg), "--seed", "4", "--out", s(&dir.join("model"))]);
    ok(&["infer", "--model", s(&dir.join("model")), "--dataset", s(&data), "--out", s(&dir.join("pred"))]);
    ok(&["evaluate", "--model", s(&dir.join("model")), "--dataset", s(&data), "--out", s(&dir.join("report.json"))]);
    let table = ok(&["report", "--input", s(&dir.join("report.json"))]);
    (snapshot(dir), table)
}
