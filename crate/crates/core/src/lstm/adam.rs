use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{NilmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update of a flat parameter slice.
pub fn adam_update(cfg: &AdamConfig, state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(NilmError::DimensionMismatch { expected: params.len(), got: grads.len().min(state.m.len()) });
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over every tensor of `params`, treating them as one flat vector.
pub fn adam_step(cfg: &AdamConfig, state: &mut AdamState, params: &mut Params, grads: &Params) -> Result<()> {
    if !params.same_shape(grads) || state.m.len() != params.len() {
        return Err(NilmError::DimensionMismatch { expected: params.len(), got: grads.len() });
    }
    let mut flat = params.flat();
    adam_update(cfg, state, &mut flat, &grads.flat())?;
    let mut it = flat.into_iter();
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = it.next().expect("lengths checked");
        }
    }
    Ok(())
}
