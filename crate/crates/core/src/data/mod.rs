//! Household datasets: meter CSV ingestion, the synthetic household simulator and
//! the on-disk dataset layout.

mod meter;
mod sim;
mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use meter::{load_meter_csv, ColumnMap, GapPolicy};
pub use sim::{simulate_house, BackgroundWater, ProgramSegment, SimConfig, UsageModel, WeightedProgram};
pub use store::{export_dataset, import_dataset, DATASET_FORMAT_VERSION};

use crate::error::{NilmError, Result};
use crate::types::{ApplianceSpec, Registry, SampledSeries};

/// Aggregate and sub-metered channels of one household on a shared time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseDataset {
    pub registry: Registry,
    pub aggregate_power: SampledSeries,
    pub aggregate_water: SampledSeries,
    pub appliance_power: BTreeMap<String, SampledSeries>,
    pub appliance_water: BTreeMap<String, SampledSeries>,
    #[serde(default)]
    pub sim_config: Option<SimConfig>,
}

impl HouseDataset {
    pub fn len(&self) -> usize {
        self.aggregate_power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aggregate_power.is_empty()
    }

    pub fn step(&self) -> i64 {
        self.aggregate_power.step
    }

    pub fn samples_per_day(&self) -> usize {
        (86_400 / self.step()).max(1) as usize
    }

    pub fn days(&self) -> usize {
        self.len() / self.samples_per_day()
    }

    fn channels(&self) -> impl Iterator<Item = &SampledSeries> {
        [&self.aggregate_power, &self.aggregate_water]
            .into_iter()
            .chain(self.appliance_power.values())
            .chain(self.appliance_water.values())
    }

    /// Checks that every channel shares start time, step and length, and that
    /// every sub-metered channel belongs to a registered appliance.
    pub fn validate(&self) -> Result<()> {
        self.registry.validate()?;
        let reference = &self.aggregate_power;
        for ch in self.channels() {
            ch.validate()?;
            if ch.len() != reference.len() {
                return Err(NilmError::DomainMismatch { expected: reference.len(), got: ch.len() });
            }
            if ch.start_time != reference.start_time || ch.step != reference.step {
                return Err(NilmError::Format("channels disagree on start time or step".into()));
            }
        }
        for id in self.appliance_power.keys().chain(self.appliance_water.keys()) {
            if self.registry.get(id).is_none() {
                return Err(NilmError::UnknownAppliance(id.clone()));
            }
        }
        Ok(())
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        let cut = |m: &BTreeMap<String, SampledSeries>| m.iter().map(|(k, v)| (k.clone(), v.slice(start, end))).collect();
        Self {
            registry: self.registry.clone(),
            aggregate_power: self.aggregate_power.slice(start, end),
            aggregate_water: self.aggregate_water.slice(start, end),
            appliance_power: cut(&self.appliance_power),
            appliance_water: cut(&self.appliance_water),
            sim_config: self.sim_config.clone(),
        }
    }

    /// Sub-metered power channels paired with their specs, in registry order.
    pub fn submetered(&self) -> Vec<(ApplianceSpec, SampledSeries)> {
        self.registry
            .appliances
            .iter()
            .filter_map(|spec| self.appliance_power.get(&spec.id).map(|s| (spec.clone(), s.clone())))
            .collect()
    }
}
