use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, bce_loss, lstm_backward, lstm_forward, AdamConfig, AdamState, LstmModel, Params};
use crate::error::{NilmError, Result};

/// One training sequence: flat `T x input_dim` inputs and `T x output_dim` 0/1 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Restore the parameters of the epoch with the best validation accuracy.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 50, epochs: 50, lr: 0.001, seed: 0, clip_norm: Some(5.0), keep_best: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Element-wise accuracy on the validation windows after each epoch (empty without validation data).
    pub val_accuracy: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Windows handled by one worker before partial gradients are summed.
const CHUNK: usize = 8;

fn window_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [epoch as u64, position as u64] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
    }
    h
}

fn check_window(model: &LstmModel, w: &Window) -> Result<()> {
    let c = &model.config;
    if w.inputs.is_empty() || w.inputs.len() % c.input_dim != 0 {
        return Err(NilmError::ShapeMismatch(format!("window inputs of length {} for input_dim {}", w.inputs.len(), c.input_dim)));
    }
    let steps = w.inputs.len() / c.input_dim;
    if w.targets.len() != steps * c.output_dim {
        return Err(NilmError::ShapeMismatch(format!("{} targets for {steps} steps x {} outputs", w.targets.len(), c.output_dim)));
    }
    Ok(())
}

/// Mean loss and summed gradient of a chunk, processed sequentially.
fn chunk_gradient(model: &LstmModel, windows: &[(usize, &Window)], seed: u64, epoch: usize) -> Result<(f64, Params)> {
    let mut grad = Params::zeros(&model.config);
    let mut loss = 0.0;
    for &(pos, w) in windows {
        let mut rng = ChaCha8Rng::seed_from_u64(window_seed(seed, epoch, pos));
        let (out, cache) = lstm_forward(model, &w.inputs, true, &mut rng)?;
        let (l, g) = bce_loss(&out, &w.targets)?;
        grad.accumulate(&lstm_backward(model, &cache, &g)?);
        loss += l;
    }
    Ok((loss, grad))
}

/// Minibatch Adam training with BPTT over whole windows.
///
/// Gradients inside a batch are computed in parallel and summed in a fixed
/// order, so results depend only on `cfg.seed` and not on the thread count.
pub fn train(model: &mut LstmModel, train_set: &[Window], val_set: &[Window], cfg: &TrainConfig) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(NilmError::EmptyTrain);
    }
    if cfg.batch_size == 0 {
        return Err(NilmError::InvalidConfig("batch_size must be > 0".into()));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(NilmError::InvalidConfig(format!("learning rate must be >= 0, got {}", cfg.lr)));
    }
    for w in train_set.iter().chain(val_set) {
        check_window(model, w)?;
    }
    let adam = AdamConfig { lr: cfg.lr, ..Default::default() };
    let mut state = AdamState::new(model.params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Params)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<(usize, &Window)> = batch.iter().enumerate().map(|(k, &i)| (b * cfg.batch_size + k, &train_set[i])).collect();
            let model_ref: &LstmModel = model;
            let partials: Vec<Result<(f64, Params)>> = items.par_chunks(CHUNK).map(|c| chunk_gradient(model_ref, c, cfg.seed, epoch)).collect();
            let mut grad = Params::zeros(&model.config);
            let mut batch_loss = 0.0;
            for p in partials {
                let (l, g) = p?;
                batch_loss += l;
                grad.accumulate(&g);
            }
            grad.scale(1.0 / batch.len() as f64);
            if let Some(max) = cfg.clip_norm {
                let n = grad.norm();
                if n > max {
                    grad.scale(max / n);
                }
            }
            adam_step(&adam, &mut state, &mut model.params, &grad)?;
            epoch_loss += batch_loss;
        }
        report.epoch_loss.push(epoch_loss / train_set.len() as f64);
        if !val_set.is_empty() {
            let acc = window_accuracy(model, val_set)?;
            report.val_accuracy.push(acc);
            if cfg.keep_best && best.as_ref().is_none_or(|(a, _)| acc > *a) {
                best = Some((acc, model.params.clone()));
                report.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(report)
}

/// Fraction of output elements whose thresholded prediction (>= 0.5) equals the target.
pub fn window_accuracy(model: &LstmModel, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(NilmError::EmptyInput);
    }
    let counts: Vec<Result<(usize, usize)>> = windows
        .par_iter()
        .map(|w| {
            check_window(model, w)?;
            let out = model.predict(&w.inputs)?;
            let hit = out.iter().zip(&w.targets).filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5)).count();
            Ok((hit, out.len()))
        })
        .collect();
    let (mut hit, mut total) = (0, 0);
    for c in counts {
        let (h, t) = c?;
        hit += h;
        total += t;
    }
    Ok(hit as f64 / total as f64)
}
