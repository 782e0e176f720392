//! Domain types shared by the detector, the classifiers and the pipelines.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};

/// Default sampling step in seconds (minutely data).
pub const DEFAULT_STEP: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Power,
    Water,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Power => "power",
            SeriesKind::Water => "water",
        }
    }
}

/// A uniformly sampled measurement series: watts for power, volume per minute for water.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSeries {
    pub start_time: i64,
    pub step: i64,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
}

impl SampledSeries {
    pub fn new(start_time: i64, step: i64, values: Vec<f64>, kind: SeriesKind) -> Self {
        Self { start_time, step, values, kind }
    }

    pub fn power(values: Vec<f64>) -> Self {
        Self::new(0, DEFAULT_STEP, values, SeriesKind::Power)
    }

    pub fn water(values: Vec<f64>) -> Self {
        Self::new(0, DEFAULT_STEP, values, SeriesKind::Water)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_time + self.step * index as i64
    }

    /// Same time axis, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, ..self.clone() }
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            start_time: self.timestamp(start),
            step: self.step,
            values: self.values[start..end].to_vec(),
            kind: self.kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_series(self)
    }
}

/// Checks the series invariants: positive step, non-empty, finite and non-negative values.
pub fn validate_series(s: &SampledSeries) -> Result<()> {
    if s.step <= 0 {
        return Err(NilmError::InvalidStep(s.step));
    }
    if s.values.is_empty() {
        return Err(NilmError::EmptySeries);
    }
    for (i, v) in s.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(NilmError::NonFinite(i));
        }
        if *v < 0.0 {
            return Err(NilmError::NegativeValue(i));
        }
    }
    Ok(())
}

/// A detected step change: sample index and signed power change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub delta: f64,
}

/// Sparse event list aligned to a parent series of `domain_len` samples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventSignal {
    pub domain_len: usize,
    pub events: Vec<Event>,
}

impl EventSignal {
    pub fn new(domain_len: usize, events: Vec<Event>) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for e in &events {
            if e.index == 0 || e.index >= domain_len {
                return Err(NilmError::Format(format!(
                    "event index {} outside [1, {domain_len})",
                    e.index
                )));
            }
            if prev.is_some_and(|p| p >= e.index) {
                return Err(NilmError::Format("event indices must be strictly increasing".into()));
            }
            prev = Some(e.index);
        }
        Ok(Self { domain_len, events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Dense rendering: the event delta at event indices, zero elsewhere.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.domain_len];
        for e in &self.events {
            dense[e.index] = e.delta;
        }
        dense
    }

    /// Inverse of [`EventSignal::to_dense`]: every non-zero sample becomes an event.
    pub fn from_dense(dense: &[f64]) -> Self {
        let events = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(index, &delta)| Event { index, delta })
            .collect();
        Self { domain_len: dense.len(), events }
    }
}

/// One operating mode of an appliance with its power band in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub index: usize,
    pub power_low: f64,
    pub power_high: f64,
}

impl Mode {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.power_low + self.power_high)
    }

    /// Distance from `power` to the band, zero inside it.
    pub fn distance(&self, power: f64) -> f64 {
        if power < self.power_low {
            self.power_low - power
        } else if power > self.power_high {
            power - self.power_high
        } else {
            0.0
        }
    }
}

/// A water draw tied to an appliance cycle, offsets in minutes from cycle start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterSegment {
    pub offset_min: u32,
    pub duration_min: u32,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub id: String,
    pub modes: Vec<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub water_program: Option<Vec<WaterSegment>>,
}

impl ApplianceSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| NilmError::InvalidSpec { id: self.id.clone(), reason: reason.to_string() };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        let off = self.modes.first().ok_or_else(|| invalid("no modes"))?;
        if off.index != 0 || off.power_low != 0.0 || off.power_high != 0.0 {
            return Err(invalid("mode 0 must be OFF with a 0-0 W band"));
        }
        if self.modes.len() > MAX_MODES as usize {
            return Err(invalid("too many modes"));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if m.index != i {
                return Err(invalid("mode indices must be 0, 1, 2, ..."));
            }
            if !(m.power_low.is_finite() && m.power_high.is_finite()) || m.power_low > m.power_high || m.power_low < 0.0 {
                return Err(invalid("mode band must satisfy 0 <= low <= high"));
            }
        }
        if let Some(program) = &self.water_program {
            if program.iter().any(|w| w.duration_min == 0 || !(w.flow.is_finite() && w.flow > 0.0)) {
                return Err(invalid("water segments need positive duration and flow"));
            }
        }
        Ok(())
    }

    pub fn uses_water(&self) -> bool {
        self.water_program.as_ref().is_some_and(|p| !p.is_empty())
    }

    /// Number of ON modes (all modes except OFF).
    pub fn on_modes(&self) -> usize {
        self.modes.len().saturating_sub(1)
    }

    /// The mode whose band is closest to `power` (ties go to the lower index).
    pub fn mode_for_level(&self, power: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for m in &self.modes {
            let d = m.distance(power);
            if d < best_d {
                best_d = d;
                best = m.index;
            }
        }
        best
    }

    pub fn midpoint(&self, mode: usize) -> f64 {
        self.modes.get(mode).map_or(0.0, Mode::midpoint)
    }
}

/// Upper bound on modes per appliance; also the radix of [`TransitionId`].
pub const MAX_MODES: u32 = 16;

/// A mode transition `(from, to)` flattened to `from * MAX_MODES + to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransitionId(pub u32);

impl TransitionId {
    pub fn new(from: usize, to: usize) -> Self {
        TransitionId(from as u32 * MAX_MODES + to as u32)
    }

    pub fn from_mode(self) -> usize {
        (self.0 / MAX_MODES) as usize
    }

    pub fn to_mode(self) -> usize {
        (self.0 % MAX_MODES) as usize
    }
}

/// Label `a_ij`: appliance `i`, transition `j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventLabel {
    pub appliance: String,
    pub transition: TransitionId,
}

impl EventLabel {
    pub fn new(appliance: impl Into<String>, from: usize, to: usize) -> Self {
        Self { appliance: appliance.into(), transition: TransitionId::new(from, to) }
    }
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}->{}", self.appliance, self.transition.from_mode(), self.transition.to_mode())
    }
}

/// Events with their feature vectors and labels; `None` marks an UNKNOWN event.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledEventSet {
    pub indices: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Option<EventLabel>>,
    pub ambiguous: Vec<bool>,
    pub provenance: String,
}

impl LabeledEventSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.len() != n || self.indices.len() != n || self.ambiguous.len() != n {
            return Err(NilmError::LengthMismatch(self.features.len(), n));
        }
        let d = self.dim();
        if let Some(row) = self.features.iter().find(|r| r.len() != d) {
            return Err(NilmError::DimensionMismatch { expected: d, got: row.len() });
        }
        Ok(())
    }

    pub fn check_registry(&self, registry: &Registry) -> Result<()> {
        for label in self.labels.iter().flatten() {
            if registry.get(&label.appliance).is_none() {
                return Err(NilmError::UnknownAppliance(label.appliance.clone()));
            }
        }
        Ok(())
    }

    /// Keeps the rows selected by `keep`, in their original order.
    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            indices: keep.iter().map(|&i| self.indices[i]).collect(),
            features: keep.iter().map(|&i| self.features[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            ambiguous: keep.iter().map(|&i| self.ambiguous[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Drops UNKNOWN rows.
    pub fn known(&self) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i].is_some()).collect();
        self.select(&keep)
    }

    pub fn unknown_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Per-sample binary water activity of one appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterLabelSeries {
    pub start_time: i64,
    pub step: i64,
    pub labels: Vec<u8>,
}

/// The set of appliances known to a dataset or model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub appliances: Vec<ApplianceSpec>,
}

const TABLE_ONE_JSON: &str = include_str!("../data/appliances.json");

impl Registry {
    pub fn new(appliances: Vec<ApplianceSpec>) -> Result<Self> {
        let reg = Self { appliances };
        reg.validate()?;
        Ok(reg)
    }

    /// The bundled seven-appliance registry with the published mode bands.
    pub fn bundled() -> Self {
        Self::from_json(TABLE_ONE_JSON).expect("bundled appliance registry is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let reg: Registry = serde_json::from_str(text).map_err(|e| NilmError::Format(format!("registry: {e}")))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.appliances.is_empty() {
            return Err(NilmError::EmptyInput);
        }
        for (i, a) in self.appliances.iter().enumerate() {
            a.validate()?;
            if self.appliances[..i].iter().any(|b| b.id == a.id) {
                return Err(NilmError::InvalidSpec { id: a.id.clone(), reason: "duplicate id".into() });
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ApplianceSpec> {
        self.appliances.iter().find(|a| a.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.appliances.iter().map(|a| a.id.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_valid() {
        let s = SampledSeries::power(vec![5.0, 5.0, 5.0]);
        assert!(validate_series(&s).is_ok());
    }

    #[test]
    fn nan_is_reported_with_its_index() {
        let s = SampledSeries::power(vec![1.0, 2.0, f64::NAN, 3.0]);
        assert!(matches!(validate_series(&s), Err(NilmError::NonFinite(2))));
    }

    #[test]
    fn empty_and_negative_series_are_rejected() {
        assert!(matches!(validate_series(&SampledSeries::power(vec![])), Err(NilmError::EmptySeries)));
        let s = SampledSeries::water(vec![0.0, -1.0]);
        assert!(matches!(validate_series(&s), Err(NilmError::NegativeValue(1))));
        let mut s = SampledSeries::power(vec![1.0]);
        s.step = 0;
        assert!(matches!(validate_series(&s), Err(NilmError::InvalidStep(0))));
    }

    #[test]
    fn bundled_registry_matches_published_bands() {
        let reg = Registry::bundled();
        assert_eq!(reg.appliances.len(), 7);
        let band = |id: &str, mode: usize| {
            let m = reg.get(id).unwrap().modes[mode];
            (m.power_low, m.power_high)
        };
        // Mode 0 is OFF; index 1 is the first ON band ("Mode 2" in the published table).
        assert_eq!(band("fridge", 1), (100.0, 200.0));
        assert_eq!(band("fridge", 2), (400.0, 500.0));
        assert_eq!(band("dryer", 1), (4000.0, 5000.0));
        assert_eq!(band("dishwasher", 1), (100.0, 200.0));
        assert_eq!(band("dishwasher", 2), (700.0, 800.0));
        assert_eq!(band("heat_pump", 1), (1000.0, 1850.0));
        assert_eq!(band("oven", 1), (3400.0, 3550.0));
        assert_eq!(band("basement", 1), (330.0, 350.0));
        assert_eq!(band("washing_machine", 1), (100.0, 250.0));
        assert_eq!(band("washing_machine", 2), (400.0, 700.0));
        for a in &reg.appliances {
            assert_eq!(band(&a.id, 0), (0.0, 0.0));
        }
        assert!(reg.get("dishwasher").unwrap().uses_water());
        assert_eq!(reg.appliances.iter().filter(|a| a.uses_water()).count(), 1);
    }

    #[test]
    fn spec_validation_rejects_bad_bands() {
        let mut spec = Registry::bundled().get("dryer").unwrap().clone();
        spec.modes[1].power_low = 6000.0;
        assert!(spec.validate().is_err());
        let mut spec = Registry::bundled().get("dryer").unwrap().clone();
        spec.modes[0].power_high = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn transition_id_round_trip() {
        let t = TransitionId::new(2, 1);
        assert_eq!((t.from_mode(), t.to_mode()), (2, 1));
        assert_eq!(t.0, 2 * MAX_MODES + 1);
    }

    #[test]
    fn mode_lookup_picks_nearest_band() {
        let fridge = Registry::bundled().get("fridge").unwrap().clone();
        assert_eq!(fridge.mode_for_level(0.0), 0);
        assert_eq!(fridge.mode_for_level(150.0), 1);
        assert_eq!(fridge.mode_for_level(260.0), 1);
        assert_eq!(fridge.mode_for_level(390.0), 2);
        assert_eq!(fridge.mode_for_level(30.0), 0);
    }

    #[test]
    fn event_signal_rejects_unordered_events() {
        let bad = vec![Event { index: 3, delta: 1.0 }, Event { index: 3, delta: 2.0 }];
        assert!(EventSignal::new(10, bad).is_err());
        assert!(EventSignal::new(10, vec![Event { index: 0, delta: 1.0 }]).is_err());
        assert!(EventSignal::new(10, vec![Event { index: 10, delta: 1.0 }]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dense_sparse_round_trip(len in 2usize..300, raw in proptest::collection::vec((1usize..300, -5000.0f64..5000.0), 0..40)) {
                let mut events: Vec<Event> = raw
                    .into_iter()
                    .filter(|(i, d)| *i < len && *d != 0.0)
                    .map(|(index, delta)| Event { index, delta })
                    .collect();
                events.sort_by_key(|e| e.index);
                events.dedup_by_key(|e| e.index);
                let sig = EventSignal::new(len, events).unwrap();
                let back = EventSignal::from_dense(&sig.to_dense());
                prop_assert_eq!(back, sig);
            }
        }
    }
}
