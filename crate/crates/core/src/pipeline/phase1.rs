use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::HouseDataset;
use crate::detect::{detect, DetectorConfig, Detection, FilteredSeries, WINDOW};
use crate::error::Result;
use crate::knn::{knn_classify_stream, knn_fit, ClassifiedEvent, KnnModel, DEFAULT_K, DEFAULT_MINKOWSKI_P};
use crate::metrics::{ApplianceMetrics, ConfusionCounts, Granularity};
use crate::preprocess::{balance_undersample, label_events, BalanceConfig, BalanceTarget, MatchConfig};
use crate::types::{EventSignal, LabeledEventSet, Registry, SampledSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase1Config {
    pub k: usize,
    pub minkowski_p: f64,
    pub matching: MatchConfig,
    /// Undersampling of the labelled training events; `None` keeps them all.
    pub balance: Option<BalanceConfig>,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            minkowski_p: DEFAULT_MINKOWSKI_P,
            matching: MatchConfig::default(),
            balance: Some(BalanceConfig { seed: 0, target: BalanceTarget::Cap(200) }),
        }
    }
}

/// Detection that tolerates series too short for the filter by reporting no events.
pub fn detect_or_empty(s: &SampledSeries, cfg: &DetectorConfig) -> Result<Detection> {
    if s.len() <= WINDOW {
        s.validate()?;
        return Ok(Detection { filtered: FilteredSeries { values: s.values.clone() }, events: EventSignal { domain_len: s.len(), events: vec![] } });
    }
    detect(s, cfg)
}

/// Detects aggregate events and labels them from the sub-metered channels.
pub fn label_dataset(ds: &HouseDataset, det: &DetectorConfig, matching: &MatchConfig) -> Result<(Detection, LabeledEventSet)> {
    let detection = detect_or_empty(&ds.aggregate_power, det)?;
    let labels = label_events(&detection, &ds.submetered(), det, matching)?;
    Ok((detection, labels))
}

/// Fits the event classifier on the labelled events of a training split.
pub fn train_knn(ds: &HouseDataset, det: &DetectorConfig, cfg: &Phase1Config) -> Result<KnnModel> {
    let (_, labels) = label_dataset(ds, det, &cfg.matching)?;
    let mut set = labels.known();
    if let Some(b) = &cfg.balance {
        set = balance_undersample(&set, b)?;
    }
    knn_fit(&set, cfg.k, cfg.minkowski_p)
}

#[derive(Debug, Clone)]
pub struct Phase1Output {
    pub detection: Detection,
    /// Final event streams of the appliances outside the overlap group.
    pub exclusive: BTreeMap<String, Vec<ClassifiedEvent>>,
    /// Events predicted as overlap-group appliances, handed to Phase 2.
    pub ambiguous: Vec<ClassifiedEvent>,
    /// Every event with its predicted label.
    pub all: Vec<ClassifiedEvent>,
}

pub fn run_phase1(agg_power: &SampledSeries, knn: &KnnModel, det: &DetectorConfig, overlap: &BTreeSet<String>) -> Result<Phase1Output> {
    let detection = detect_or_empty(agg_power, det)?;
    let stream = knn_classify_stream(knn, &detection, overlap)?;
    let exclusive = stream.per_appliance.into_iter().filter(|(a, _)| !overlap.contains(a)).collect();
    Ok(Phase1Output { detection, exclusive, ambiguous: stream.ambiguous, all: stream.events })
}

/// Event-level scores: each detected event is one sample, ON for an appliance
/// when that appliance is its (predicted or true) cause. Events without a
/// ground-truth label count as negatives for every appliance.
pub fn evaluate_phase1(truth: &LabeledEventSet, predicted: &[ClassifiedEvent], registry: &Registry) -> Result<Vec<ApplianceMetrics>> {
    if truth.len() != predicted.len() {
        return Err(crate::NilmError::LengthMismatch(predicted.len(), truth.len()));
    }
    let mut rows = Vec::new();
    for spec in &registry.appliances {
        let mut c = ConfusionCounts::default();
        for (p, t) in predicted.iter().zip(&truth.labels) {
            let is_true = t.as_ref().is_some_and(|l| l.appliance == spec.id);
            c.add(p.label.appliance == spec.id, is_true);
        }
        if c.tp + c.fn_ + c.fp == 0 {
            continue;
        }
        rows.push(ApplianceMetrics::new(&spec.id, "power", Granularity::Event, spec.on_modes(), c));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EventLabel;

    fn ev(index: usize, app: &str) -> ClassifiedEvent {
        ClassifiedEvent { index, delta: 100.0, label: EventLabel::new(app, 0, 1) }
    }

    #[test]
    fn short_series_gives_no_events() {
        for n in 1..=3 {
            let d = detect_or_empty(&SampledSeries::power(vec![100.0 * n as f64; n]), &DetectorConfig::new(15.0).unwrap()).unwrap();
            assert!(d.events.events.is_empty());
        }
    }

    #[test]
    fn event_level_counts() {
        let reg = Registry::bundled();
        let truth = LabeledEventSet {
            indices: vec![1, 2, 3],
            features: vec![vec![0.0, 0.0]; 3],
            labels: vec![Some(EventLabel::new("dryer", 0, 1)), Some(EventLabel::new("oven", 0, 1)), None],
            ambiguous: vec![false; 3],
            provenance: "t".into(),
        };
        let rows = evaluate_phase1(&truth, &[ev(1, "dryer"), ev(2, "dryer"), ev(3, "oven")], &reg).unwrap();
        let dryer = rows.iter().find(|r| r.appliance == "dryer").unwrap();
        assert_eq!((dryer.counts.tp, dryer.counts.fp, dryer.counts.fn_), (1, 1, 0));
        let oven = rows.iter().find(|r| r.appliance == "oven").unwrap();
        assert_eq!((oven.counts.tp, oven.counts.fp, oven.counts.fn_), (0, 1, 1));
        assert!(rows.iter().all(|r| r.appliance != "fridge"));
    }
}
