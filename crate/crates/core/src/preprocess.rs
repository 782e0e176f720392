//! Training-data preparation: event signals, event and water labels, class
//! balancing, min-max scaling and chronological splits.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::HouseDataset;
use crate::detect::{detect, Detection, DetectorConfig};
use crate::error::{NilmError, Result};
use crate::types::{
    validate_series, ApplianceSpec, EventLabel, EventSignal, LabeledEventSet, SampledSeries, SeriesKind,
    WaterLabelSeries,
};

/// Event signal of a series: smoothing, steady-state filtering and differencing.
pub fn build_event_signal(s: &SampledSeries, cfg: &DetectorConfig) -> Result<EventSignal> {
    validate_series(s)?;
    Ok(detect(s, cfg)?.events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Maximum time offset in samples between an aggregate event and its cause.
    pub window: usize,
    /// Relative power tolerance; the absolute tolerance is `max(sigma_g, frac * |delta|)`.
    pub tol_fraction: f64,
    /// A merged event keeps the label of its largest constituent only when that
    /// constituent is at least this many times the sum of the others.
    pub dominance: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { window: 2, tol_fraction: 0.1, dominance: 2.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct SubEvent {
    appliance: usize,
    index: usize,
    delta: f64,
    from: usize,
    to: usize,
}

/// Events detected on one sub-metered appliance series, with inferred mode transitions.
pub fn appliance_events(spec: &ApplianceSpec, series: &SampledSeries, cfg: &DetectorConfig) -> Result<Vec<(usize, f64, usize, usize)>> {
    let det = detect(series, cfg)?;
    Ok(det
        .events
        .events
        .iter()
        .map(|e| {
            let from = spec.mode_for_level(det.filtered.values[e.index - 1]);
            let to = spec.mode_for_level(det.filtered.values[e.index]);
            (e.index, e.delta, from, to)
        })
        .collect())
}

/// Labels every aggregate event with the sub-metered appliance transition that caused it.
///
/// Each aggregate event is matched to the unused appliance event closest in time, then in
/// power, within `mcfg.window` samples and the power tolerance. When no single event
/// explains it, small sets of simultaneous appliance events whose deltas sum to the
/// aggregate delta are tried; such merged events are flagged ambiguous and keep the
/// dominant constituent's label only if it clearly dominates, otherwise they are UNKNOWN.
pub fn label_events(
    aggregate: &Detection,
    submetered: &[(ApplianceSpec, SampledSeries)],
    cfg: &DetectorConfig,
    mcfg: &MatchConfig,
) -> Result<LabeledEventSet> {
    let n = aggregate.filtered.len();
    let mut subs: Vec<SubEvent> = Vec::new();
    for (a, (spec, series)) in submetered.iter().enumerate() {
        if series.len() != n {
            return Err(NilmError::DomainMismatch { expected: n, got: series.len() });
        }
        for (index, delta, from, to) in appliance_events(spec, series, cfg)? {
            subs.push(SubEvent { appliance: a, index, delta, from, to });
        }
    }
    subs.sort_by_key(|s| (s.index, s.appliance));
    let mut used = vec![false; subs.len()];

    let mut out = LabeledEventSet { provenance: "aggregate".into(), ..Default::default() };
    out.features = aggregate.features();
    let mut lo = 0;
    for ev in &aggregate.events.events {
        let tol = cfg.sigma_g.max(mcfg.tol_fraction * ev.delta.abs());
        while lo < subs.len() && subs[lo].index + mcfg.window < ev.index {
            lo += 1;
        }
        let near: Vec<usize> = (lo..subs.len())
            .take_while(|&i| subs[i].index <= ev.index + mcfg.window)
            .filter(|&i| !used[i])
            .collect();

        let singles: Vec<usize> = near.iter().copied().filter(|&i| (subs[i].delta - ev.delta).abs() <= tol).collect();
        let best = singles.iter().copied().min_by(|&a, &b| {
            let key = |i: usize| (subs[i].index.abs_diff(ev.index), (subs[i].delta - ev.delta).abs());
            let (ta, pa) = key(a);
            let (tb, pb) = key(b);
            ta.cmp(&tb).then(pa.total_cmp(&pb))
        });

        let (label, ambiguous) = if let Some(i) = best {
            used[i] = true;
            let s = subs[i];
            let rival = singles.iter().any(|&j| subs[j].appliance != s.appliance);
            let spec = &submetered[s.appliance].0;
            (Some(EventLabel::new(spec.id.clone(), s.from, s.to)), rival)
        } else if let Some(set) = best_subset(&subs, &near, ev.delta, tol) {
            for &i in &set {
                used[i] = true;
            }
            let dom = *set.iter().max_by(|&&a, &&b| subs[a].delta.abs().total_cmp(&subs[b].delta.abs())).unwrap();
            let rest: f64 = set.iter().filter(|&&i| i != dom).map(|&i| subs[i].delta.abs()).sum();
            let label = (subs[dom].delta.abs() >= mcfg.dominance * rest).then(|| {
                let s = subs[dom];
                EventLabel::new(submetered[s.appliance].0.id.clone(), s.from, s.to)
            });
            (label, true)
        } else {
            (None, false)
        };
        out.indices.push(ev.index);
        out.labels.push(label);
        out.ambiguous.push(ambiguous);
    }
    Ok(out)
}

/// Subset of at least two candidates whose delta sum lies closest to `target` within `tol`.
fn best_subset(subs: &[SubEvent], near: &[usize], target: f64, tol: f64) -> Option<Vec<usize>> {
    let near = &near[..near.len().min(6)];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1u32..(1 << near.len()) {
        if mask.count_ones() < 2 {
            continue;
        }
        let set: Vec<usize> = (0..near.len()).filter(|b| mask & (1 << b) != 0).map(|b| near[b]).collect();
        let err = (set.iter().map(|&i| subs[i].delta).sum::<f64>() - target).abs();
        if err <= tol && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, set));
        }
    }
    best.map(|(_, s)| s)
}

/// Per-sample water activity: 1 where the appliance water sample exceeds `threshold`.
pub fn label_water(appliance_water: &SampledSeries, threshold: f64) -> Result<WaterLabelSeries> {
    if appliance_water.kind != SeriesKind::Water {
        return Err(NilmError::KindMismatch { expected: "water", got: appliance_water.kind.as_str() });
    }
    Ok(WaterLabelSeries {
        start_time: appliance_water.start_time,
        step: appliance_water.step,
        labels: appliance_water.values.iter().map(|&v| u8::from(v > threshold)).collect(),
    })
}

/// Per-sample power activity (any non-OFF mode counts as ON).
pub fn power_labels(appliance_power: &SampledSeries) -> Vec<u8> {
    appliance_power.values.iter().map(|&v| u8::from(v > 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceTarget {
    MatchMinority,
    Cap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub seed: u64,
    pub target: BalanceTarget,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self { seed: 42, target: BalanceTarget::MatchMinority }
    }
}

/// Seeded random under-sampling over arbitrary class keys.
///
/// Returns the surviving row indices in ascending order. Each class keeps
/// `min(count, target)` rows drawn uniformly without replacement.
pub fn undersample_indices<K: Ord + Clone>(keys: &[K], cfg: &BalanceConfig) -> Result<Vec<usize>> {
    let mut classes: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        classes.entry(k.clone()).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(NilmError::SingleClass);
    }
    let target = match cfg.target {
        BalanceTarget::MatchMinority => classes.values().map(Vec::len).min().unwrap_or(0),
        BalanceTarget::Cap(n) => n,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut keep = Vec::new();
    for rows in classes.values() {
        if rows.len() <= target {
            keep.extend_from_slice(rows);
        } else {
            let picked = rand::seq::index::sample(&mut rng, rows.len(), target);
            keep.extend(picked.iter().map(|j| rows[j]));
        }
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Under-samples every label class (UNKNOWN counts as its own class) to the target size.
pub fn balance_undersample(set: &LabeledEventSet, cfg: &BalanceConfig) -> Result<LabeledEventSet> {
    set.check()?;
    let keep = undersample_indices(&set.labels, cfg)?;
    Ok(set.select(&keep))
}

/// Per-feature min/max learned on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Fits from column slices (one per feature).
    pub fn fit_columns(columns: &[&[f64]]) -> Result<Self> {
        if columns.is_empty() || columns.iter().any(|c| c.is_empty()) {
            return Err(NilmError::EmptyInput);
        }
        let min = columns.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let max = columns.iter().map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    pub fn unscale(&self, j: usize, v: f64) -> f64 {
        self.min[j] + v * (self.max[j] - self.min[j])
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(NilmError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(x.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect())
    }

    pub fn invert(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(NilmError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(x.iter().enumerate().map(|(j, &v)| self.unscale(j, v)).collect())
    }
}

/// Min-max scaler fitted on row-major training features.
pub fn fit_scaler(train: &[Vec<f64>]) -> Result<ScalerParams> {
    let d = train.first().map_or(0, Vec::len);
    if train.is_empty() || d == 0 {
        return Err(NilmError::EmptyInput);
    }
    if let Some(r) = train.iter().find(|r| r.len() != d) {
        return Err(NilmError::DimensionMismatch { expected: d, got: r.len() });
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|j| train.iter().map(|r| r[j]).collect()).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    ScalerParams::fit_columns(&refs)
}

/// Scales rows without clamping: values outside the training range map outside `[0, 1]`.
pub fn apply_scaler(params: &ScalerParams, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    x.iter().map(|r| params.apply(r)).collect()
}

/// Chronological split: the first `train_days` then the following `test_days`.
pub fn split_train_test(ds: &HouseDataset, train_days: usize, test_days: usize) -> Result<(HouseDataset, HouseDataset)> {
    let per_day = ds.samples_per_day();
    let available = ds.len() / per_day;
    if train_days + test_days > available || train_days == 0 || test_days == 0 {
        return Err(NilmError::InsufficientData { needed: train_days + test_days, available });
    }
    let boundary = train_days * per_day;
    Ok((ds.slice(0, boundary), ds.slice(boundary, boundary + test_days * per_day)))
}
