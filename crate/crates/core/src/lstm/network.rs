use rand::Rng;

use super::{sigmoid, LstmModel, Params};
use crate::error::{NilmError, Result};

/// Activations of one forward pass, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub steps: usize,
    dims: (usize, usize, usize, usize),
    x: Vec<f64>,
    /// Post-activation gates per step: `[i | f | g | o]`, each `H` wide.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    /// Dropout multipliers applied to `h` (0 or `1 / (1 - p)`; all 1 in eval mode).
    mask: Vec<f64>,
    fc_pre: Vec<f64>,
    fc_act: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl ForwardCache {
    pub fn hidden(&self) -> &[f64] {
        &self.h
    }

    pub fn cell(&self) -> &[f64] {
        &self.c
    }
}

/// Runs the network over a flat `T x input_dim` sequence from zero initial state.
///
/// Returns `T x output_dim` sigmoid probabilities. In train mode inverted dropout
/// with masks drawn from `rng` is applied to the LSTM outputs before the FC layer.
pub fn lstm_forward<R: Rng + ?Sized>(model: &LstmModel, seq: &[f64], train_mode: bool, rng: &mut R) -> Result<(Vec<f64>, ForwardCache)> {
    let cfg = &model.config;
    let (ni, nh, nf, no) = (cfg.input_dim, cfg.lstm_units, cfg.fc_units, cfg.output_dim);
    if seq.is_empty() || seq.len() % ni != 0 {
        return Err(NilmError::ShapeMismatch(format!("sequence length {} is not a positive multiple of input_dim {ni}", seq.len())));
    }
    if let Some(i) = seq.iter().position(|v| !v.is_finite()) {
        return Err(NilmError::NonFiniteInput(i / ni));
    }
    let p = &model.params;
    let steps = seq.len() / ni;
    let mut cache = ForwardCache {
        steps,
        dims: (ni, nh, nf, no),
        x: seq.to_vec(),
        gates: vec![0.0; steps * 4 * nh],
        c: vec![0.0; steps * nh],
        tanh_c: vec![0.0; steps * nh],
        h: vec![0.0; steps * nh],
        mask: vec![1.0; steps * nh],
        fc_pre: vec![0.0; steps * nf],
        fc_act: vec![0.0; steps * nf],
        outputs: vec![0.0; steps * no],
    };
    let keep = 1.0 - cfg.dropout_p;
    if train_mode && cfg.dropout_p > 0.0 {
        for m in cache.mask.iter_mut() {
            *m = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
    }

    let mut z = vec![0.0; 4 * nh];
    let mut dropped = vec![0.0; nh];
    for t in 0..steps {
        let x = &seq[t * ni..(t + 1) * ni];
        z.copy_from_slice(&p.b);
        for (r, zr) in z.iter_mut().enumerate() {
            let wx = &p.w_x[r * ni..(r + 1) * ni];
            let mut acc = 0.0;
            for k in 0..ni {
                acc += wx[k] * x[k];
            }
            if t > 0 {
                let h_prev = &cache.h[(t - 1) * nh..t * nh];
                let wh = &p.w_h[r * nh..(r + 1) * nh];
                for k in 0..nh {
                    acc += wh[k] * h_prev[k];
                }
            }
            *zr += acc;
        }
        let g = &mut cache.gates[t * 4 * nh..(t + 1) * 4 * nh];
        for u in 0..nh {
            g[u] = sigmoid(z[u]);
            g[nh + u] = sigmoid(z[nh + u]);
            g[2 * nh + u] = z[2 * nh + u].tanh();
            g[3 * nh + u] = sigmoid(z[3 * nh + u]);
        }
        for u in 0..nh {
            let c_prev = if t > 0 { cache.c[(t - 1) * nh + u] } else { 0.0 };
            let c = g[nh + u] * c_prev + g[u] * g[2 * nh + u];
            let tc = c.tanh();
            cache.c[t * nh + u] = c;
            cache.tanh_c[t * nh + u] = tc;
            let h = g[3 * nh + u] * tc;
            cache.h[t * nh + u] = h;
            dropped[u] = h * cache.mask[t * nh + u];
        }
        for j in 0..nf {
            let w = &p.w_fc[j * nh..(j + 1) * nh];
            let mut acc = p.b_fc[j];
            for u in 0..nh {
                acc += w[u] * dropped[u];
            }
            cache.fc_pre[t * nf + j] = acc;
            cache.fc_act[t * nf + j] = acc.max(0.0);
        }
        for k in 0..no {
            let w = &p.w_out[k * nf..(k + 1) * nf];
            let a = &cache.fc_act[t * nf..(t + 1) * nf];
            let mut acc = p.b_out[k];
            for j in 0..nf {
                acc += w[j] * a[j];
            }
            cache.outputs[t * no + k] = sigmoid(acc);
        }
    }
    Ok((cache.outputs.clone(), cache))
}

/// Gradients of a scalar loss for every parameter, given `dL/d(outputs)`.
pub fn lstm_backward(model: &LstmModel, cache: &ForwardCache, grad_outputs: &[f64]) -> Result<Params> {
    let cfg = &model.config;
    let (ni, nh, nf, no) = (cfg.input_dim, cfg.lstm_units, cfg.fc_units, cfg.output_dim);
    if cache.dims != (ni, nh, nf, no) || grad_outputs.len() != cache.steps * no {
        return Err(NilmError::CacheMismatch);
    }
    let p = &model.params;
    let steps = cache.steps;
    let mut grads = Params::zeros(cfg);

    // Head: sigmoid outputs -> rectified FC -> dropout, per time step.
    let mut dh_head = vec![0.0; steps * nh];
    let mut dz_out = vec![0.0; no];
    let mut dfc = vec![0.0; nf];
    for t in 0..steps {
        for k in 0..no {
            let y = cache.outputs[t * no + k];
            dz_out[k] = grad_outputs[t * no + k] * y * (1.0 - y);
        }
        let a = &cache.fc_act[t * nf..(t + 1) * nf];
        for k in 0..no {
            grads.b_out[k] += dz_out[k];
            let gw = &mut grads.w_out[k * nf..(k + 1) * nf];
            for j in 0..nf {
                gw[j] += dz_out[k] * a[j];
            }
        }
        for j in 0..nf {
            let mut acc = 0.0;
            for k in 0..no {
                acc += p.w_out[k * nf + j] * dz_out[k];
            }
            dfc[j] = if cache.fc_pre[t * nf + j] > 0.0 { acc } else { 0.0 };
        }
        let mask = &cache.mask[t * nh..(t + 1) * nh];
        let h = &cache.h[t * nh..(t + 1) * nh];
        for j in 0..nf {
            if dfc[j] == 0.0 {
                continue;
            }
            grads.b_fc[j] += dfc[j];
            let gw = &mut grads.w_fc[j * nh..(j + 1) * nh];
            for u in 0..nh {
                gw[u] += dfc[j] * h[u] * mask[u];
            }
        }
        let dh = &mut dh_head[t * nh..(t + 1) * nh];
        for j in 0..nf {
            if dfc[j] == 0.0 {
                continue;
            }
            let w = &p.w_fc[j * nh..(j + 1) * nh];
            for u in 0..nh {
                dh[u] += w[u] * dfc[j];
            }
        }
        for u in 0..nh {
            dh[u] *= mask[u];
        }
    }

    // Recurrence, newest step first.
    let mut dh_next = vec![0.0; nh];
    let mut dc_next = vec![0.0; nh];
    let mut dz = vec![0.0; 4 * nh];
    for t in (0..steps).rev() {
        let g = &cache.gates[t * 4 * nh..(t + 1) * 4 * nh];
        for u in 0..nh {
            let (i, f, gg, o) = (g[u], g[nh + u], g[2 * nh + u], g[3 * nh + u]);
            let tc = cache.tanh_c[t * nh + u];
            let c_prev = if t > 0 { cache.c[(t - 1) * nh + u] } else { 0.0 };
            let dh = dh_head[t * nh + u] + dh_next[u];
            let dc = dc_next[u] + dh * o * (1.0 - tc * tc);
            dz[u] = dc * gg * i * (1.0 - i);
            dz[nh + u] = dc * c_prev * f * (1.0 - f);
            dz[2 * nh + u] = dc * i * (1.0 - gg * gg);
            dz[3 * nh + u] = dh * tc * o * (1.0 - o);
            dc_next[u] = dc * f;
        }
        let x = &cache.x[t * ni..(t + 1) * ni];
        for r in 0..4 * nh {
            let d = dz[r];
            grads.b[r] += d;
            let gw = &mut grads.w_x[r * ni..(r + 1) * ni];
            for k in 0..ni {
                gw[k] += d * x[k];
            }
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        if t > 0 {
            let h_prev = &cache.h[(t - 1) * nh..t * nh];
            for r in 0..4 * nh {
                let d = dz[r];
                let gw = &mut grads.w_h[r * nh..(r + 1) * nh];
                let w = &p.w_h[r * nh..(r + 1) * nh];
                for k in 0..nh {
                    gw[k] += d * h_prev[k];
                    dh_next[k] += w[k] * d;
                }
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{bce_loss, LstmConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(units: usize) -> LstmConfig {
        LstmConfig { input_dim: 1, lstm_units: units, fc_units: 1, output_dim: 1, dropout_p: 0.0, init_range: 0.5 }
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let cfg = LstmConfig::desk(2, 2);
        let m = LstmModel::zeroed(cfg).unwrap();
        let seq: Vec<f64> = (0..20).map(|i| i as f64 * 0.37).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (out, cache) = lstm_forward(&m, &seq, false, &mut rng).unwrap();
        assert!(out.iter().all(|&y| y == 0.5));
        // With zero weights g = tanh(0) = 0, so the cell and hidden states stay at zero.
        assert!(cache.cell().iter().all(|&c| c == 0.0));
        assert!(cache.hidden().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn single_step_matches_hand_algebra() {
        let m = LstmModel {
            config: tiny(1),
            params: Params {
                w_x: vec![0.5, -0.3, 0.8, 0.2],
                w_h: vec![0.1, 0.1, 0.1, 0.1],
                b: vec![0.1, 0.2, -0.1, 0.05],
                w_fc: vec![1.5],
                b_fc: vec![0.1],
                w_out: vec![-0.7],
                b_out: vec![0.3],
            },
            input_scaler: None,
        };
        let x = 0.9f64;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let g = (0.8 * x - 0.1).tanh();
        let o = s(0.2 * x + 0.05);
        let c = i * g;
        let h = o * c.tanh();
        let a = (1.5 * h + 0.1).max(0.0);
        let expected = s(-0.7 * a + 0.3);
        let out = m.predict(&[x]).unwrap();
        assert!((out[0] - expected).abs() < 1e-12, "{} vs {expected}", out[0]);
    }

    #[test]
    fn dropout_free_train_mode_equals_eval() {
        let mut cfg = LstmConfig::desk(2, 1);
        cfg.dropout_p = 0.0;
        let m = LstmModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let seq: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        let (train, _) = lstm_forward(&m, &seq, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(train, m.predict(&seq).unwrap());
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let m = LstmModel::zeroed(LstmConfig::desk(2, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(lstm_forward(&m, &[1.0, 2.0, 3.0], false, &mut rng), Err(NilmError::ShapeMismatch(_))));
        assert!(matches!(lstm_forward(&m, &[], false, &mut rng), Err(NilmError::ShapeMismatch(_))));
        assert!(matches!(lstm_forward(&m, &[1.0, 2.0, f64::NAN, 0.0], false, &mut rng), Err(NilmError::NonFiniteInput(1))));
        let (_, cache) = lstm_forward(&m, &[1.0, 2.0], false, &mut rng).unwrap();
        assert!(matches!(lstm_backward(&m, &cache, &[0.0, 0.0]), Err(NilmError::CacheMismatch)));
        let other = LstmModel::zeroed(LstmConfig::desk(2, 2)).unwrap();
        assert!(matches!(lstm_backward(&other, &cache, &[0.0, 0.0]), Err(NilmError::CacheMismatch)));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let m = LstmModel::new(LstmConfig::desk(2, 2), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let seq = vec![0.3; 2 * 8];
        let (out, cache) = lstm_forward(&m, &seq, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let g = lstm_backward(&m, &cache, &vec![0.0; out.len()]).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_fc_unit_has_zero_output_weight_gradient() {
        let cfg = LstmConfig { input_dim: 1, lstm_units: 2, fc_units: 2, output_dim: 1, dropout_p: 0.0, init_range: 0.3 };
        let mut m = LstmModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // FC unit 1 never activates: zero incoming weights and a negative bias.
        m.params.w_fc[2..4].fill(0.0);
        m.params.b_fc[1] = -1.0;
        m.params.b_fc[0] = 1.0;
        let seq = [0.1, 0.5, 0.9];
        let (out, cache) = lstm_forward(&m, &seq, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (_, grad) = bce_loss(&out, &[1.0, 0.0, 1.0]).unwrap();
        let g = lstm_backward(&m, &cache, &grad).unwrap();
        assert_eq!(g.w_out[1], 0.0);
        assert_eq!(&g.w_fc[2..4], &[0.0, 0.0]);
        assert_eq!(g.b_fc[1], 0.0);
        assert_ne!(g.w_out[0], 0.0);
    }
}
