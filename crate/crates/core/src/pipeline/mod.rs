//! End-to-end processes: Phase-1 event classification, Phase-2 power/water
//! networks for the overlapping appliances, and profile reconstruction.

mod phase1;
mod phase2;
mod reconstruct;

pub use phase1::{detect_or_empty, evaluate_phase1, label_dataset, run_phase1, train_knn, Phase1Config, Phase1Output};
pub use phase2::{
    balanced_starts, evaluate_phase2, fit_network, infer_probabilities, train_baseline, train_iterative, train_parallel, window_starts, ApplianceTargets,
    BaselineNets, IterativeChain, ParallelNet, Phase2Config, Phase2Inputs, Phase2Model, Phase2Prediction, WindowConfig,
};
pub use reconstruct::{conservation_fraction, reconstruct_from_bits, reconstruct_from_events, reconstruct_house, HouseReconstruction, ModeGraphViolation, Reconstruction};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::HouseDataset;
use crate::detect::DetectorConfig;
use crate::error::{NilmError, Result};
use crate::knn::KnnModel;
use crate::metrics::{build_report, fingerprint, ApplianceMetrics, DisaggregationReport};
use crate::types::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    KnnOnly,
    Parallel,
    Iterative,
    Baseline,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [PipelineKind::KnnOnly, PipelineKind::Parallel, PipelineKind::Iterative, PipelineKind::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::KnnOnly => "knn-only",
            PipelineKind::Parallel => "parallel",
            PipelineKind::Iterative => "iterative",
            PipelineKind::Baseline => "baseline",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = NilmError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| NilmError::InvalidConfig(format!("unknown pipeline {s:?} (expected knn-only, parallel, iterative or baseline)")))
    }
}

/// Appliances with an ON band that intersects an ON band of another appliance.
pub fn overlap_group(registry: &Registry) -> BTreeSet<String> {
    let on = |a: &crate::types::ApplianceSpec| a.modes.iter().filter(|m| m.index != 0).map(|m| (m.power_low, m.power_high)).collect::<Vec<_>>();
    let mut out = BTreeSet::new();
    for a in &registry.appliances {
        for b in &registry.appliances {
            if a.id == b.id {
                continue;
            }
            if on(a).iter().any(|&(al, ah)| on(b).iter().any(|&(bl, bh)| al <= bh && bl <= ah)) {
                out.insert(a.id.clone());
            }
        }
    }
    out
}

/// Everything a trained pipeline needs at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub kind: PipelineKind,
    pub detector: DetectorConfig,
    pub knn: KnnModel,
    pub overlap: BTreeSet<String>,
    pub phase2: Vec<Phase2Model>,
}

/// Appliances handled by Phase-2 networks: overlap-group members that draw
/// water and have a water channel in `ds`.
pub fn phase2_appliances(ds: &HouseDataset, overlap: &BTreeSet<String>) -> Vec<String> {
    ds.registry
        .appliances
        .iter()
        .filter(|a| overlap.contains(&a.id) && a.uses_water() && ds.appliance_water.contains_key(&a.id) && ds.appliance_power.contains_key(&a.id))
        .map(|a| a.id.clone())
        .collect()
}

pub fn train_pipeline(train: &HouseDataset, cfg: &PipelineConfig) -> Result<TrainedPipeline> {
    let detector = cfg.detector.resolve(&train.aggregate_power)?;
    let overlap = cfg.overlap_group(&train.registry);
    let knn = train_knn(train, &detector, &cfg.phase1)?;
    let mut phase2 = Vec::new();
    if cfg.pipeline != PipelineKind::KnnOnly {
        let forwarded = run_phase1(&train.aggregate_power, &knn, &detector, &overlap)?;
        let inputs = Phase2Inputs::from_phase1(train, &forwarded)?;
        for id in phase2_appliances(train, &overlap) {
            let targets = ApplianceTargets::from_dataset(train, &id, cfg.phase2.water_threshold)?;
            phase2.push(match cfg.pipeline {
                PipelineKind::Parallel => Phase2Model::Parallel(train_parallel(&id, &inputs, &targets, &cfg.phase2)?),
                PipelineKind::Iterative => Phase2Model::Iterative(train_iterative(&id, &inputs, &targets, &cfg.phase2)?),
                PipelineKind::Baseline => Phase2Model::Baseline(train_baseline(&id, &inputs, &targets, &cfg.phase2)?),
                PipelineKind::KnnOnly => unreachable!(),
            });
        }
    }
    Ok(TrainedPipeline { kind: cfg.pipeline, detector, knn, overlap, phase2 })
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub phase1: Phase1Output,
    pub phase2: Vec<Phase2Prediction>,
}

pub fn infer(pipeline: &TrainedPipeline, ds: &HouseDataset, window: &WindowConfig, threshold: f64) -> Result<Inference> {
    let phase1 = run_phase1(&ds.aggregate_power, &pipeline.knn, &pipeline.detector, &pipeline.overlap)?;
    let mut phase2 = Vec::new();
    if !pipeline.phase2.is_empty() {
        let inputs = Phase2Inputs::from_phase1(ds, &phase1)?;
        for m in &pipeline.phase2 {
            phase2.push(m.predict(&inputs, window, threshold)?);
        }
    }
    Ok(Inference { phase1, phase2 })
}

/// Scores an inference against the sub-metered ground truth of `ds`.
///
/// Phase-1 rows are event-level; each Phase-2 appliance adds timestep-level
/// power and water rows whose power score replaces its Phase-1 score in the average.
pub fn evaluate(pipeline: &TrainedPipeline, inference: &Inference, ds: &HouseDataset, cfg: &PipelineConfig) -> Result<DisaggregationReport> {
    let (_, truth) = label_dataset(ds, &pipeline.detector, &cfg.phase1.matching)?;
    let mut rows: Vec<ApplianceMetrics> = evaluate_phase1(&truth, &inference.phase1.all, &ds.registry)?;
    for pred in &inference.phase2 {
        let spec = ds.registry.get(&pred.appliance).ok_or_else(|| NilmError::UnknownAppliance(pred.appliance.clone()))?;
        let targets = ApplianceTargets::from_dataset(ds, &pred.appliance, cfg.phase2.water_threshold)?;
        rows.extend(evaluate_phase2(pred, &targets, spec.on_modes())?);
    }
    build_report(rows, pipeline.kind.as_str(), fingerprint(cfg), cfg.seeds())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_overlap_group() {
        let g = overlap_group(&Registry::bundled());
        let names: Vec<&str> = g.iter().map(String::as_str).collect();
        assert_eq!(names, vec!["dishwasher", "fridge", "washing_machine"]);
    }

    #[test]
    fn pipeline_names_round_trip() {
        for k in PipelineKind::ALL {
            assert_eq!(k.as_str().parse::<PipelineKind>().unwrap(), k);
        }
        assert!("lstm".parse::<PipelineKind>().is_err());
    }
}
