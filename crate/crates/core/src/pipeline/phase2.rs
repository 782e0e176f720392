use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::HouseDataset;
use crate::error::{NilmError, Result};
use crate::lstm::{train, LstmConfig, LstmModel, TrainConfig, TrainReport, Window};
use crate::metrics::{count_confusion, ApplianceMetrics, Granularity};
use crate::preprocess::{label_water, power_labels, undersample_indices, BalanceConfig, BalanceTarget, ScalerParams};

use super::phase1::Phase1Output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length: 60, stride: 30 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 || self.stride == 0 || self.stride > self.length {
            return Err(NilmError::InvalidConfig(format!("window length {} / stride {} must satisfy 2 <= length, 1 <= stride <= length", self.length, self.stride)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase2Config {
    /// Layer sizes; input and output widths are set per network.
    pub lstm: LstmConfig,
    pub train: TrainConfig,
    pub window: WindowConfig,
    /// Sigmoid outputs at or above this value are ON.
    pub threshold: f64,
    /// Appliance water samples above this flow count as water-active.
    pub water_threshold: f64,
    /// Trailing fraction of the training series held out for per-epoch validation.
    pub val_fraction: f64,
}

impl Phase2Config {
    pub fn desk() -> Self {
        Self {
            lstm: LstmConfig::desk(1, 1),
            // Small networks on 30-day houses converge within 30 epochs only
            // with a large step and small batches.
            train: TrainConfig { batch_size: 16, epochs: 30, lr: 0.05, ..TrainConfig::default() },
            window: WindowConfig { length: 60, stride: 15 },
            threshold: 0.5,
            water_threshold: 0.0,
            val_fraction: 0.1,
        }
    }

    pub fn full() -> Self {
        Self { lstm: LstmConfig::full(1, 1), train: TrainConfig::default(), window: WindowConfig::default(), ..Self::desk() }
    }
}

/// Dense per-timestep inputs shared by every Phase-2 network.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Inputs {
    pub agg_power: Vec<f64>,
    /// Dense rendering of the ambiguous events forwarded by Phase 1.
    pub event_signal: Vec<f64>,
    pub agg_water: Vec<f64>,
}

impl Phase2Inputs {
    /// Inputs for a house whose aggregate power went through Phase 1.
    pub fn from_phase1(ds: &HouseDataset, phase1: &Phase1Output) -> Result<Self> {
        let n = ds.aggregate_power.len();
        if phase1.detection.filtered.len() != n {
            return Err(NilmError::DomainMismatch { expected: n, got: phase1.detection.filtered.len() });
        }
        let mut event_signal = vec![0.0; n];
        for e in &phase1.ambiguous {
            event_signal[e.index] = e.delta;
        }
        Ok(Self { agg_power: ds.aggregate_power.values.clone(), event_signal, agg_water: ds.aggregate_water.values.clone() })
    }

    pub fn len(&self) -> usize {
        self.agg_power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agg_power.is_empty()
    }
}

/// Ground-truth ON bits of one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceTargets {
    pub power: Vec<f64>,
    pub water: Vec<f64>,
}

impl ApplianceTargets {
    pub fn from_dataset(ds: &HouseDataset, appliance: &str, water_threshold: f64) -> Result<Self> {
        let p = ds.appliance_power.get(appliance).ok_or_else(|| NilmError::UnknownAppliance(appliance.into()))?;
        let w = ds.appliance_water.get(appliance).ok_or_else(|| NilmError::UnknownAppliance(format!("{appliance} (no water channel)")))?;
        let power = power_labels(p).into_iter().map(f64::from).collect();
        let water = label_water(w, water_threshold)?.labels.into_iter().map(f64::from).collect();
        Ok(Self { power, water })
    }
}

/// Row-major `T x columns.len()` interleaving.
fn interleave(columns: &[&[f64]]) -> Vec<f64> {
    let t = columns.first().map_or(0, |c| c.len());
    let mut out = Vec::with_capacity(t * columns.len());
    for i in 0..t {
        for c in columns {
            out.push(c[i]);
        }
    }
    out
}

fn check_lengths(columns: &[&[f64]]) -> Result<usize> {
    let n = columns.first().map_or(0, |c| c.len());
    if n == 0 {
        return Err(NilmError::EmptyInput);
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(NilmError::DomainMismatch { expected: n, got: c.len() });
    }
    Ok(n)
}

pub fn window_starts(len: usize, w: &WindowConfig) -> Vec<usize> {
    if len < w.length {
        return vec![];
    }
    (0..=len - w.length).step_by(w.stride).collect()
}

/// Keeps every window with appliance activity and an equal number of idle windows.
pub fn balanced_starts(starts: &[usize], activity: &[f64], w: &WindowConfig, seed: u64) -> Result<Vec<usize>> {
    let keys: Vec<bool> = starts.iter().map(|&s| activity[s..s + w.length].iter().any(|&v| v > 0.0)).collect();
    if keys.iter().all(|&k| k == keys[0]) {
        return Ok(starts.to_vec());
    }
    let keep = undersample_indices(&keys, &BalanceConfig { seed, target: BalanceTarget::MatchMinority })?;
    Ok(keep.into_iter().map(|i| starts[i]).collect())
}

fn slice_windows(inputs: &[f64], in_dim: usize, targets: &[f64], out_dim: usize, starts: &[usize], length: usize) -> Vec<Window> {
    starts
        .iter()
        .map(|&s| Window {
            inputs: inputs[s * in_dim..(s + length) * in_dim].to_vec(),
            targets: targets[s * out_dim..(s + length) * out_dim].to_vec(),
        })
        .collect()
}

fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_add(stage.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Trains one network mapping the given input columns to the target columns.
///
/// Inputs are min-max scaled with a scaler fitted here and stored in the model.
/// Windows are balanced on appliance activity; the trailing `val_fraction` of
/// the series supplies validation windows.
pub fn fit_network(inputs: &[&[f64]], targets: &[&[f64]], activity: &[f64], cfg: &Phase2Config, stage: u64) -> Result<(LstmModel, TrainReport)> {
    cfg.window.validate()?;
    let n = check_lengths(inputs)?;
    if check_lengths(targets)? != n || activity.len() != n {
        return Err(NilmError::DomainMismatch { expected: n, got: activity.len() });
    }
    let scaler = ScalerParams::fit_columns(inputs)?;
    let scaled: Vec<Vec<f64>> = inputs.iter().enumerate().map(|(j, c)| c.iter().map(|&v| scaler.scale(j, v)).collect()).collect();
    let scaled_refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
    let x = interleave(&scaled_refs);
    let y = interleave(targets);

    let seed = stage_seed(cfg.train.seed, stage);
    let cut = ((n as f64) * (1.0 - cfg.val_fraction)).round() as usize;
    let starts = window_starts(n, &cfg.window);
    let (train_starts, val_starts): (Vec<usize>, Vec<usize>) = starts.iter().partition(|&&s| s + cfg.window.length <= cut);
    let train_starts = balanced_starts(&train_starts, activity, &cfg.window, seed)?;
    let val_starts = if val_starts.is_empty() { val_starts } else { balanced_starts(&val_starts, activity, &cfg.window, seed ^ 1)? };
    let train_w = slice_windows(&x, inputs.len(), &y, targets.len(), &train_starts, cfg.window.length);
    let val_w = slice_windows(&x, inputs.len(), &y, targets.len(), &val_starts, cfg.window.length);

    let lc = LstmConfig { input_dim: inputs.len(), output_dim: targets.len(), ..cfg.lstm };
    let mut model = LstmModel::new(lc, &mut ChaCha8Rng::seed_from_u64(seed))?;
    model.input_scaler = Some(scaler);
    let tc = TrainConfig { seed, ..cfg.train };
    let report = if tc.epochs == 0 { TrainReport::default() } else { train(&mut model, &train_w, &val_w, &tc)? };
    Ok((model, report))
}

/// Output probabilities over a whole series (`T x output_dim`, row-major).
///
/// The series is covered by windows overlapping by half; each sample takes its
/// prediction from the window where it lies in the second half, so it sees at
/// least half a window of history.
pub fn infer_probabilities(model: &LstmModel, inputs: &[&[f64]], window: &WindowConfig) -> Result<Vec<f64>> {
    window.validate()?;
    let n = check_lengths(inputs)?;
    if inputs.len() != model.config.input_dim {
        return Err(NilmError::DimensionMismatch { expected: model.config.input_dim, got: inputs.len() });
    }
    let scaled: Vec<Vec<f64>> = match &model.input_scaler {
        Some(s) => inputs.iter().enumerate().map(|(j, c)| c.iter().map(|&v| s.scale(j, v)).collect()).collect(),
        None => inputs.iter().map(|c| c.to_vec()).collect(),
    };
    let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
    let x = interleave(&refs);
    let (ni, no) = (model.config.input_dim, model.config.output_dim);
    let len = window.length.min(n);
    let half = len / 2;
    let mut starts: Vec<usize> = (0..=n - len).step_by(half.max(1)).collect();
    if *starts.last().expect("non-empty") != n - len {
        starts.push(n - len);
    }
    use rayon::prelude::*;
    let outs: Vec<Vec<f64>> = starts.par_iter().map(|&s| model.predict(&x[s * ni..(s + len) * ni])).collect::<Result<_>>()?;
    let mut probs = vec![0.0; n * no];
    let mut filled = 0;
    for (k, (&s, out)) in starts.iter().zip(&outs).enumerate() {
        let from = if k == 0 { 0 } else { s + half };
        let from = from.max(filled).min(s + len);
        for t in from..s + len {
            probs[t * no..(t + 1) * no].copy_from_slice(&out[(t - s) * no..(t - s + 1) * no]);
        }
        filled = filled.max(s + len);
    }
    Ok(probs)
}

fn column(flat: &[f64], dim: usize, j: usize) -> Vec<f64> {
    flat.iter().skip(j).step_by(dim).copied().collect()
}

fn bits(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// One network per water-using overlap appliance: (event signal, aggregate water) to (power bit, water bit).
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelNet {
    pub appliance: String,
    pub model: LstmModel,
    pub report: TrainReport,
}

/// Three chained networks: aggregate power to power bit, then (stage-1 output,
/// aggregate water) to water bit, then (aggregate power, stage-2 output) to power bit.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeChain {
    pub appliance: String,
    pub stages: [LstmModel; 3],
    pub reports: [TrainReport; 3],
}

/// Two independent networks: event signal to power bit and aggregate water to water bit.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineNets {
    pub appliance: String,
    pub power: LstmModel,
    pub water: LstmModel,
    pub reports: [TrainReport; 2],
}

fn activity(t: &ApplianceTargets) -> Vec<f64> {
    t.power.iter().zip(&t.water).map(|(p, w)| p.max(*w)).collect()
}

pub fn train_parallel(appliance: &str, x: &Phase2Inputs, t: &ApplianceTargets, cfg: &Phase2Config) -> Result<ParallelNet> {
    let (model, report) = fit_network(&[&x.event_signal, &x.agg_water], &[&t.power, &t.water], &activity(t), cfg, 0)?;
    Ok(ParallelNet { appliance: appliance.into(), model, report })
}

/// Stages are trained in order; stages 2 and 3 learn from the predictions of
/// the stage before, as they would see at inference time.
pub fn train_iterative(appliance: &str, x: &Phase2Inputs, t: &ApplianceTargets, cfg: &Phase2Config) -> Result<IterativeChain> {
    let act = activity(t);
    let (m1, r1) = fit_network(&[&x.agg_power], &[&t.power], &act, cfg, 1)?;
    let p1 = infer_probabilities(&m1, &[&x.agg_power], &cfg.window)?;
    let (m2, r2) = fit_network(&[&p1, &x.agg_water], &[&t.water], &act, cfg, 2)?;
    let p2 = infer_probabilities(&m2, &[&p1, &x.agg_water], &cfg.window)?;
    let (m3, r3) = fit_network(&[&x.agg_power, &p2], &[&t.power], &act, cfg, 3)?;
    Ok(IterativeChain { appliance: appliance.into(), stages: [m1, m2, m3], reports: [r1, r2, r3] })
}

pub fn train_baseline(appliance: &str, x: &Phase2Inputs, t: &ApplianceTargets, cfg: &Phase2Config) -> Result<BaselineNets> {
    let act = activity(t);
    let (power, rp) = fit_network(&[&x.event_signal], &[&t.power], &act, cfg, 4)?;
    let (water, rw) = fit_network(&[&x.agg_water], &[&t.water], &act, cfg, 5)?;
    Ok(BaselineNets { appliance: appliance.into(), power, water, reports: [rp, rw] })
}

/// Per-timestep output of a Phase-2 model for one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Prediction {
    pub appliance: String,
    pub power_prob: Vec<f64>,
    pub water_prob: Vec<f64>,
    pub power_bits: Vec<u8>,
    pub water_bits: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phase2Model {
    Parallel(ParallelNet),
    Iterative(IterativeChain),
    Baseline(BaselineNets),
}

impl Phase2Model {
    pub fn appliance(&self) -> &str {
        match self {
            Phase2Model::Parallel(n) => &n.appliance,
            Phase2Model::Iterative(c) => &c.appliance,
            Phase2Model::Baseline(b) => &b.appliance,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Phase2Model::Parallel(_) => "parallel",
            Phase2Model::Iterative(_) => "iterative",
            Phase2Model::Baseline(_) => "baseline",
        }
    }

    /// Networks in stage order.
    pub fn networks(&self) -> Vec<&LstmModel> {
        match self {
            Phase2Model::Parallel(n) => vec![&n.model],
            Phase2Model::Iterative(c) => c.stages.iter().collect(),
            Phase2Model::Baseline(b) => vec![&b.power, &b.water],
        }
    }

    pub fn predict(&self, x: &Phase2Inputs, window: &WindowConfig, threshold: f64) -> Result<Phase2Prediction> {
        let (power_prob, water_prob) = match self {
            Phase2Model::Parallel(n) => {
                let p = infer_probabilities(&n.model, &[&x.event_signal, &x.agg_water], window)?;
                (column(&p, 2, 0), column(&p, 2, 1))
            }
            Phase2Model::Iterative(c) => {
                let p1 = infer_probabilities(&c.stages[0], &[&x.agg_power], window)?;
                let p2 = infer_probabilities(&c.stages[1], &[&p1, &x.agg_water], window)?;
                let p3 = infer_probabilities(&c.stages[2], &[&x.agg_power, &p2], window)?;
                (p3, p2)
            }
            Phase2Model::Baseline(b) => (infer_probabilities(&b.power, &[&x.event_signal], window)?, infer_probabilities(&b.water, &[&x.agg_water], window)?),
        };
        Ok(Phase2Prediction {
            appliance: self.appliance().into(),
            power_bits: bits(&power_prob, threshold),
            water_bits: bits(&water_prob, threshold),
            power_prob,
            water_prob,
        })
    }
}

/// Timestep-level power and water rows for one appliance.
pub fn evaluate_phase2(pred: &Phase2Prediction, truth: &ApplianceTargets, on_modes: usize) -> Result<Vec<ApplianceMetrics>> {
    let power = count_confusion(&pred.power_bits, &truth.power)?;
    let water = count_confusion(&pred.water_bits, &truth.water)?;
    Ok(vec![
        ApplianceMetrics::new(&pred.appliance, "power", Granularity::Timestep, on_modes, power),
        ApplianceMetrics::new(&pred.appliance, "water", Granularity::Timestep, on_modes, water),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_starts_cover_the_series() {
        let w = WindowConfig { length: 4, stride: 2 };
        assert_eq!(window_starts(9, &w), vec![0, 2, 4]);
        assert!(window_starts(3, &w).is_empty());
    }

    #[test]
    fn balancing_keeps_all_active_windows() {
        let w = WindowConfig { length: 2, stride: 2 };
        let mut act = vec![0.0; 20];
        act[3] = 1.0;
        act[9] = 1.0;
        let starts = window_starts(20, &w);
        let kept = balanced_starts(&starts, &act, &w, 3).unwrap();
        assert_eq!(kept.len(), 4);
        assert!(kept.contains(&2) && kept.contains(&8));
    }

    #[test]
    fn inference_covers_every_sample_once() {
        let cfg = LstmConfig { input_dim: 1, lstm_units: 2, fc_units: 2, output_dim: 1, dropout_p: 0.0, init_range: 0.5 };
        let m = LstmModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x: Vec<f64> = (0..23).map(|i| (i % 5) as f64 / 5.0).collect();
        let w = WindowConfig { length: 6, stride: 3 };
        let p = infer_probabilities(&m, &[&x], &w).unwrap();
        assert_eq!(p.len(), 23);
        // The first window's outputs are used verbatim.
        assert_eq!(&p[..6], &m.predict(&x[..6]).unwrap()[..]);
        // Later samples come from the window in whose second half they lie.
        assert_eq!(p[10], m.predict(&x[6..12]).unwrap()[4]);
        assert_eq!(p[22], m.predict(&x[17..23]).unwrap()[5]);
        // Series shorter than a window use one window.
        assert_eq!(infer_probabilities(&m, &[&x[..4]], &w).unwrap(), m.predict(&x[..4]).unwrap());
    }

    #[test]
    fn untrained_network_outputs_one_half() {
        let mut cfg = Phase2Config::desk();
        cfg.train.epochs = 0;
        cfg.lstm.init_range = 0.0;
        let n = 200;
        let x = Phase2Inputs { agg_power: vec![100.0; n], event_signal: vec![0.0; n], agg_water: (0..n).map(|i| (i % 7) as f64).collect() };
        let t = ApplianceTargets { power: vec![0.0; n], water: (0..n).map(|i| f64::from(i % 7 == 3)).collect() };
        let net = train_parallel("dishwasher", &x, &t, &cfg).unwrap();
        let pred = Phase2Model::Parallel(net).predict(&x, &cfg.window, 0.5).unwrap();
        assert!(pred.power_prob.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn mismatched_domains_are_rejected() {
        let cfg = Phase2Config::desk();
        let x = Phase2Inputs { agg_power: vec![1.0; 100], event_signal: vec![0.0; 100], agg_water: vec![0.0; 90] };
        let t = ApplianceTargets { power: vec![0.0; 100], water: vec![0.0; 100] };
        assert!(matches!(train_parallel("dishwasher", &x, &t, &cfg), Err(NilmError::DomainMismatch { .. })));
    }
}
