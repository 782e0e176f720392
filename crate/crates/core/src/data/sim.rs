//! Seeded household simulator driven by the appliance registry.
//!
//! Each appliance runs a cycle state machine: idle gaps are exponential, a cycle
//! follows one of the appliance's mode programs, and every program segment draws
//! its power uniformly from the mode band and holds it for the segment. Water
//! programs are time-locked to the start of each cycle. Household fixtures
//! (taps, showers, toilets) add water draws that are not tied to any appliance.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HouseDataset;
use crate::error::{NilmError, Result};
use crate::types::{ApplianceSpec, Registry, SampledSeries, SeriesKind, DEFAULT_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSegment {
    pub mode: usize,
    pub min_minutes: u32,
    pub max_minutes: u32,
}

impl ProgramSegment {
    pub const fn new(mode: usize, min_minutes: u32, max_minutes: u32) -> Self {
        Self { mode, min_minutes, max_minutes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedProgram {
    pub weight: f64,
    pub segments: Vec<ProgramSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageModel {
    pub cycles_per_day: f64,
    /// Minimum OFF time between two cycles, minutes.
    pub min_gap_minutes: u32,
    pub programs: Vec<WeightedProgram>,
}

impl UsageModel {
    fn single(cycles_per_day: f64, segments: Vec<ProgramSegment>) -> Self {
        Self { cycles_per_day, min_gap_minutes: 5, programs: vec![WeightedProgram { weight: 1.0, segments }] }
    }

    /// Default usage for the bundled appliance ids; `None` for unknown ids.
    pub fn default_for(id: &str) -> Option<Self> {
        use ProgramSegment as S;
        Some(match id {
            "fridge" => Self {
                cycles_per_day: 6.0,
                min_gap_minutes: 20,
                programs: vec![
                    WeightedProgram { weight: 0.92, segments: vec![S::new(1, 20, 40)] },
                    WeightedProgram { weight: 0.08, segments: vec![S::new(2, 10, 20)] },
                ],
            },
            "dryer" => Self::single(1.0, vec![S::new(1, 40, 70)]),
            // Pre-wash, heated wash, rinse, heated final rinse, drying fan.
            "dishwasher" => Self {
                cycles_per_day: 0.9,
                min_gap_minutes: 120,
                programs: vec![WeightedProgram {
                    weight: 1.0,
                    segments: vec![S::new(1, 10, 10), S::new(2, 30, 30), S::new(1, 14, 14), S::new(2, 16, 16), S::new(1, 25, 25)],
                }],
            },
            "heat_pump" => Self::single(4.0, vec![S::new(1, 30, 90)]),
            "oven" => Self::single(1.0, vec![S::new(1, 20, 60)]),
            "basement" => Self::single(2.0, vec![S::new(1, 30, 180)]),
            "washing_machine" => Self::single(
                0.7,
                vec![S::new(1, 15, 25), S::new(0, 3, 5), S::new(2, 8, 12), S::new(0, 3, 5), S::new(1, 10, 15), S::new(0, 3, 5), S::new(2, 5, 10)],
            ),
            _ => return None,
        })
    }

    fn validate(&self, spec: &ApplianceSpec) -> Result<()> {
        let invalid = |reason: &str| NilmError::InvalidSpec { id: spec.id.clone(), reason: reason.into() };
        if !(self.cycles_per_day.is_finite() && self.cycles_per_day >= 0.0) {
            return Err(invalid("cycles_per_day must be >= 0"));
        }
        if self.cycles_per_day > 0.0 && self.programs.is_empty() {
            return Err(invalid("no usage program"));
        }
        for p in &self.programs {
            if p.segments.is_empty() || !(p.weight > 0.0) {
                return Err(invalid("programs need segments and a positive weight"));
            }
            for s in &p.segments {
                if s.mode >= spec.modes.len() || s.min_minutes == 0 || s.min_minutes > s.max_minutes {
                    return Err(invalid("program segment refers to an unknown mode or an empty duration"));
                }
            }
        }
        Ok(())
    }
}

/// Water draws from household fixtures not modelled as appliances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundWater {
    pub draws_per_day: f64,
    pub min_minutes: u32,
    pub max_minutes: u32,
    pub flow_low: f64,
    pub flow_high: f64,
}

impl Default for BackgroundWater {
    fn default() -> Self {
        Self { draws_per_day: 14.0, min_minutes: 1, max_minutes: 8, flow_low: 2.0, flow_high: 9.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration_days: usize,
    /// Standard deviation of Gaussian noise added to aggregate power, watts.
    pub noise_std: f64,
    /// Constant always-on load added to the aggregate, watts.
    pub base_load: f64,
    pub seed: u64,
    pub start_time: i64,
    pub step: i64,
    pub usage: BTreeMap<String, UsageModel>,
    pub background_water: Option<BackgroundWater>,
}

impl SimConfig {
    /// Defaults for the given registry: 5 W noise, 150 W base load, minutely steps.
    pub fn new(registry: &Registry, duration_days: usize, seed: u64) -> Self {
        let usage = registry
            .appliances
            .iter()
            .filter_map(|a| UsageModel::default_for(&a.id).map(|u| (a.id.clone(), u)))
            .collect();
        Self {
            duration_days,
            noise_std: 5.0,
            base_load: 150.0,
            seed,
            // 2012-04-01T00:00:00Z, the first day of AMPds.
            start_time: 1_333_238_400,
            step: DEFAULT_STEP,
            usage,
            background_water: Some(BackgroundWater::default()),
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_std = 0.0;
        self
    }

    pub fn samples(&self) -> usize {
        self.duration_days * (86_400 / self.step) as usize
    }

    fn minutes_to_samples(&self, minutes: u32) -> usize {
        ((minutes as i64 * 60) / self.step).max(1) as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| NilmError::InvalidSpec { id: "sim".into(), reason: m.into() };
        if self.duration_days == 0 {
            return Err(bad("duration_days must be >= 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) || !(self.base_load.is_finite() && self.base_load >= 0.0) {
            return Err(bad("noise_std and base_load must be >= 0"));
        }
        if self.step <= 0 || 86_400 % self.step != 0 {
            return Err(bad("step must divide one day"));
        }
        Ok(())
    }
}

fn derived_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct ApplianceTrace {
    power: Vec<f64>,
    water: Option<Vec<f64>>,
}

fn simulate_appliance(spec: &ApplianceSpec, usage: Option<&UsageModel>, cfg: &SimConfig) -> ApplianceTrace {
    let n = cfg.samples();
    let mut power = vec![0.0; n];
    let mut water = spec.uses_water().then(|| vec![0.0; n]);
    let Some(usage) = usage.filter(|u| u.cycles_per_day > 0.0) else {
        return ApplianceTrace { power, water };
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, &spec.id));
    let per_day = (86_400 / cfg.step) as f64;
    let idle = Exp::new(usage.cycles_per_day / per_day).expect("positive rate");
    let total_weight: f64 = usage.programs.iter().map(|p| p.weight).sum();
    let min_gap = cfg.minutes_to_samples(usage.min_gap_minutes);

    let mut t = 0usize;
    loop {
        let start = t + idle.sample(&mut rng).round() as usize;
        let mut pick = rng.random_range(0.0..total_weight);
        let program = usage
            .programs
            .iter()
            .find(|p| {
                pick -= p.weight;
                pick < 0.0
            })
            .unwrap_or(&usage.programs[0]);
        let mut segments = Vec::with_capacity(program.segments.len());
        for seg in &program.segments {
            let minutes = rng.random_range(seg.min_minutes..=seg.max_minutes);
            let mode = spec.modes[seg.mode];
            let level = if mode.power_high > mode.power_low { rng.random_range(mode.power_low..=mode.power_high) } else { mode.power_low };
            segments.push((cfg.minutes_to_samples(minutes), level));
        }
        let len: usize = segments.iter().map(|s| s.0).sum();
        if start + len > n {
            break;
        }
        let mut at = start;
        for (dur, level) in segments {
            power[at..at + dur].fill(level);
            at += dur;
        }
        if let (Some(w), Some(program)) = (water.as_mut(), spec.water_program.as_ref()) {
            for seg in program {
                let from = start + cfg.minutes_to_samples(seg.offset_min).min(len);
                let to = (from + cfg.minutes_to_samples(seg.duration_min)).min(start + len);
                w[from..to].fill(seg.flow);
            }
        }
        t = start + len + min_gap;
    }
    ApplianceTrace { power, water }
}

fn background_water(bg: &BackgroundWater, cfg: &SimConfig) -> Vec<f64> {
    let n = cfg.samples();
    let mut w = vec![0.0; n];
    if bg.draws_per_day <= 0.0 {
        return w;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, "#background-water"));
    let per_day = (86_400 / cfg.step) as f64;
    let idle = Exp::new(bg.draws_per_day / per_day).expect("positive rate");
    let mut t = 0usize;
    loop {
        let start = t + idle.sample(&mut rng).round() as usize;
        let dur = cfg.minutes_to_samples(rng.random_range(bg.min_minutes..=bg.max_minutes));
        let flow = rng.random_range(bg.flow_low..=bg.flow_high);
        if start + dur > n {
            break;
        }
        for v in &mut w[start..start + dur] {
            *v += flow;
        }
        t = start + 1;
    }
    w
}

/// Generates a ground-truth household from the registry and usage models.
pub fn simulate_house(cfg: &SimConfig, registry: &Registry) -> Result<HouseDataset> {
    registry.validate()?;
    cfg.validate()?;
    for spec in &registry.appliances {
        if let Some(u) = cfg.usage.get(&spec.id) {
            u.validate(spec)?;
        }
    }
    let n = cfg.samples();
    let traces: Vec<ApplianceTrace> = registry
        .appliances
        .par_iter()
        .map(|spec| simulate_appliance(spec, cfg.usage.get(&spec.id), cfg))
        .collect();

    let mut agg = vec![cfg.base_load; n];
    for tr in &traces {
        for (a, p) in agg.iter_mut().zip(&tr.power) {
            *a += p;
        }
    }
    if cfg.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, "#power-noise"));
        let noise = Normal::new(0.0, cfg.noise_std).expect("finite std");
        for a in &mut agg {
            *a = (*a + noise.sample(&mut rng)).max(0.0);
        }
    }
    let mut water = match &cfg.background_water {
        Some(bg) => background_water(bg, cfg),
        None => vec![0.0; n],
    };
    for tr in &traces {
        if let Some(w) = &tr.water {
            for (a, v) in water.iter_mut().zip(w) {
                *a += v;
            }
        }
    }

    let series = |values: Vec<f64>, kind| SampledSeries::new(cfg.start_time, cfg.step, values, kind);
    let mut appliance_power = BTreeMap::new();
    let mut appliance_water = BTreeMap::new();
    for (spec, tr) in registry.appliances.iter().zip(traces) {
        if let Some(w) = tr.water {
            appliance_water.insert(spec.id.clone(), series(w, SeriesKind::Water));
        }
        appliance_power.insert(spec.id.clone(), series(tr.power, SeriesKind::Power));
    }
    Ok(HouseDataset {
        registry: registry.clone(),
        aggregate_power: series(agg, SeriesKind::Power),
        aggregate_water: series(water, SeriesKind::Water),
        appliance_power,
        appliance_water,
        sim_config: Some(cfg.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn only(registry: &Registry, id: &str) -> Registry {
        Registry::new(vec![registry.get(id).unwrap().clone()]).unwrap()
    }

    #[test]
    fn always_off_appliance_leaves_pure_noise() {
        let reg = only(&Registry::bundled(), "dryer");
        let mut cfg = SimConfig::new(&reg, 3, 7);
        cfg.usage.get_mut("dryer").unwrap().cycles_per_day = 0.0;
        cfg.base_load = 1000.0;
        let ds = simulate_house(&cfg, &reg).unwrap();
        assert!(ds.appliance_power["dryer"].values.iter().all(|&v| v == 0.0));
        let resid: Vec<f64> = ds.aggregate_power.values.iter().map(|v| v - 1000.0).collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let std = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resid.len() as f64).sqrt();
        assert!(mean.abs() < 0.5 && (std - 5.0).abs() < 0.3, "mean {mean} std {std}");
    }

    #[test]
    fn dryer_day_is_one_box_pulse() {
        let reg = only(&Registry::bundled(), "dryer");
        let mut cfg = SimConfig::new(&reg, 1, 3).noiseless();
        cfg.base_load = 0.0;
        cfg.usage.get_mut("dryer").unwrap().cycles_per_day = 6.0;
        cfg.usage.get_mut("dryer").unwrap().min_gap_minutes = 100_000;
        let ds = simulate_house(&cfg, &reg).unwrap();
        let v = &ds.aggregate_power.values;
        let on: Vec<usize> = (0..v.len()).filter(|&t| v[t] > 0.0).collect();
        assert!(!on.is_empty());
        assert_eq!(on.len(), on[on.len() - 1] - on[0] + 1, "single contiguous pulse");
        let level = v[on[0]];
        assert!((4000.0..=5000.0).contains(&level));
        assert!(on.iter().all(|&t| v[t] == level));
    }

    #[test]
    fn dishwasher_water_stays_inside_power_cycles() {
        let reg = Registry::bundled();
        let cfg = SimConfig::new(&reg, 10, 11);
        let ds = simulate_house(&cfg, &reg).unwrap();
        let p = &ds.appliance_power["dishwasher"].values;
        let w = &ds.appliance_water["dishwasher"].values;
        assert!(w.iter().any(|&x| x > 0.0));
        for t in 0..w.len() {
            if w[t] > 0.0 {
                assert!(p[t] > 0.0, "water without power at {t}");
            }
        }
        // Every cycle carries the three water draws: 5 + 6 + 5 minutes.
        let starts = (1..p.len()).filter(|&t| p[t] > 0.0 && p[t - 1] == 0.0).count();
        let water_samples = w.iter().filter(|&&x| x > 0.0).count();
        assert_eq!(water_samples, starts * 16);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let reg = Registry::bundled();
        let mut cfg = SimConfig::new(&reg, 0, 1);
        assert!(simulate_house(&cfg, &reg).is_err());
        cfg.duration_days = 1;
        cfg.usage.get_mut("oven").unwrap().programs[0].segments[0].mode = 9;
        assert!(matches!(simulate_house(&cfg, &reg), Err(NilmError::InvalidSpec { .. })));
    }
}
