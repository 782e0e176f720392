//! ON/OFF confusion counts, precision, recall, F-measure and report assembly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NilmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// Counts with prediction and truth exchanged.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tp, fp: self.fn_, tn: self.tn, fn_: self.fp }
    }
}

/// Per-sample comparison. Any non-zero value counts as ON, so multi-mode
/// series (mode indices or watts) collapse to ON/OFF.
pub fn count_confusion<P, T>(pred: &[P], truth: &[T]) -> Result<ConfusionCounts>
where
    P: Copy + Into<f64>,
    T: Copy + Into<f64>,
{
    if pred.len() != truth.len() {
        return Err(NilmError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        c.add(p.into() != 0.0, t.into() != 0.0);
    }
    Ok(c)
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(c: &ConfusionCounts) -> f64 {
    f_from(precision(c), recall(c))
}

pub fn f_from(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Each detected aggregate event is one sample (Phase 1).
    Event,
    /// Each time step is one sample (Phase 2).
    Timestep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceMetrics {
    pub appliance: String,
    /// Signal the score refers to: "power" or "water".
    pub signal: String,
    pub granularity: Granularity,
    pub on_modes: usize,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl ApplianceMetrics {
    pub fn new(appliance: &str, signal: &str, granularity: Granularity, on_modes: usize, counts: ConfusionCounts) -> Self {
        Self {
            appliance: appliance.into(),
            signal: signal.into(),
            granularity,
            on_modes,
            counts,
            precision: precision(&counts),
            recall: recall(&counts),
            f_measure: f_measure(&counts),
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisaggregationReport {
    pub schema_version: u32,
    pub pipeline: String,
    pub rows: Vec<ApplianceMetrics>,
    /// Macro-average F over the power rows (one per appliance).
    pub average_f: f64,
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
}

/// SHA-256 of a canonical JSON rendering of the effective configuration.
pub fn fingerprint<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn macro_average(fs: &[f64]) -> Result<f64> {
    if fs.is_empty() {
        return Err(NilmError::EmptyInput);
    }
    Ok(fs.iter().sum::<f64>() / fs.len() as f64)
}

/// Assembles a report. When an appliance has several power rows the last one
/// counts toward the average (Phase-2 rows are appended after Phase-1 rows).
pub fn build_report(rows: Vec<ApplianceMetrics>, pipeline: &str, config_fingerprint: String, seeds: Vec<u64>) -> Result<DisaggregationReport> {
    if rows.is_empty() {
        return Err(NilmError::EmptyInput);
    }
    let mut latest: Vec<(&str, f64)> = Vec::new();
    for r in rows.iter().filter(|r| r.signal == "power") {
        match latest.iter_mut().find(|(a, _)| *a == r.appliance) {
            Some(slot) => slot.1 = r.f_measure,
            None => latest.push((&r.appliance, r.f_measure)),
        }
    }
    let fs: Vec<f64> = if latest.is_empty() { rows.iter().map(|r| r.f_measure).collect() } else { latest.iter().map(|x| x.1).collect() };
    let average_f = macro_average(&fs)?;
    Ok(DisaggregationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        pipeline: pipeline.into(),
        rows,
        average_f,
        config_fingerprint,
        seeds,
    })
}

impl DisaggregationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Flat table: one row per appliance/signal plus a final AVG row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("appliance,signal,granularity,n_modes,precision,recall,f_measure\n");
        for r in &self.rows {
            let g = match r.granularity {
                Granularity::Event => "event",
                Granularity::Timestep => "timestep",
            };
            let _ = writeln!(out, "{},{},{},{},{:.4},{:.4},{:.4}", r.appliance, r.signal, g, r.on_modes, r.precision, r.recall, r.f_measure);
        }
        let _ = writeln!(out, "AVG,,,,,,{:.4}", self.average_f);
        out
    }
}
