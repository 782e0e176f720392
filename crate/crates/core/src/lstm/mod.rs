//! From-scratch LSTM sequence labeller: one LSTM layer, inverted dropout, a
//! rectified fully connected layer and per-output sigmoid units, trained with
//! binary cross-entropy, backpropagation through time and Adam.

mod adam;
mod checkpoint;
mod loss;
mod network;
mod train;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{bce_loss, BCE_EPS};
pub use network::{lstm_backward, lstm_forward, ForwardCache};
pub use train::{train, window_accuracy, TrainConfig, TrainReport, Window};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::preprocess::ScalerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub lstm_units: usize,
    pub fc_units: usize,
    pub output_dim: usize,
    pub dropout_p: f64,
    /// Weights start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl LstmConfig {
    /// Small network for desk-scale experiments.
    pub fn desk(input_dim: usize, output_dim: usize) -> Self {
        Self { input_dim, lstm_units: 32, fc_units: 16, output_dim, dropout_p: 0.3, init_range: 0.05 }
    }

    /// Layer sizes from the published training table.
    pub fn full(input_dim: usize, output_dim: usize) -> Self {
        Self { lstm_units: 500, fc_units: 200, ..Self::desk(input_dim, output_dim) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.lstm_units == 0 || self.fc_units == 0 || self.output_dim == 0 {
            return Err(NilmError::InvalidConfig("all layer sizes must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NilmError::InvalidConfig(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(NilmError::InvalidConfig("init_range must be >= 0".into()));
        }
        Ok(())
    }
}

/// All trainable tensors. Gate rows are ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `4H x I` input kernel.
    pub w_x: Vec<f64>,
    /// `4H x H` recurrent kernel.
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
    /// `F x H`.
    pub w_fc: Vec<f64>,
    pub b_fc: Vec<f64>,
    /// `O x F`.
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl Params {
    pub fn zeros(cfg: &LstmConfig) -> Self {
        let (i, h, f, o) = (cfg.input_dim, cfg.lstm_units, cfg.fc_units, cfg.output_dim);
        Self {
            w_x: vec![0.0; 4 * h * i],
            w_h: vec![0.0; 4 * h * h],
            b: vec![0.0; 4 * h],
            w_fc: vec![0.0; f * h],
            b_fc: vec![0.0; f],
            w_out: vec![0.0; o * f],
            b_out: vec![0.0; o],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 7] {
        [&self.w_x, &self.w_h, &self.b, &self.w_fc, &self.b_fc, &self.w_out, &self.b_out]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [&mut self.w_x, &mut self.w_h, &mut self.b, &mut self.w_fc, &mut self.b_fc, &mut self.w_out, &mut self.b_out]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.tensors().iter().zip(other.tensors()).all(|(a, b)| a.len() == b.len())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn get(&self, mut k: usize) -> f64 {
        for t in self.tensors() {
            if k < t.len() {
                return t[k];
            }
            k -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut k: usize, v: f64) {
        for t in self.tensors_mut() {
            if k < t.len() {
                t[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: Params,
    /// Min-max scaler for the input channels, applied by callers before the forward pass.
    pub input_scaler: Option<ScalerParams>,
}

impl LstmModel {
    /// Uniform kernel initialisation; biases start at zero except the forget gate (1.0).
    pub fn new<R: Rng>(config: LstmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = Params::zeros(&config);
        let r = config.init_range;
        for t in [&mut params.w_x, &mut params.w_h, &mut params.w_fc, &mut params.w_out] {
            for v in t.iter_mut() {
                *v = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
            }
        }
        let h = config.lstm_units;
        params.b[h..2 * h].fill(1.0);
        Ok(Self { config, params, input_scaler: None })
    }

    pub fn zeroed(config: LstmConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { params: Params::zeros(&config), config, input_scaler: None })
    }

    /// Eval-mode output probabilities for a flat `T x input_dim` sequence.
    pub fn predict(&self, seq: &[f64]) -> Result<Vec<f64>> {
        // Eval mode never draws from the generator.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        Ok(lstm_forward(self, seq, false, &mut rng)?.0)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
