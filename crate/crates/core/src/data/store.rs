//! Dataset directory layout: `manifest.json` plus one `timestamp,value` CSV per channel.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HouseDataset, SimConfig};
use crate::error::{NilmError, Result};
use crate::types::{Registry, SampledSeries, SeriesKind};

pub const DATASET_FORMAT_VERSION: &str = "nilm-dataset/1";
const MANIFEST: &str = "manifest.json";
const CSV_HEADER: &str = "timestamp,value";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    start_time: i64,
    step: i64,
    samples: usize,
    registry: Registry,
    sim_config: Option<SimConfig>,
    channels: Vec<Channel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Channel {
    name: String,
    kind: SeriesKind,
    /// Appliance id, or `None` for the aggregate meters.
    appliance: Option<String>,
    file: String,
}

fn write_channel(path: &Path, s: &SampledSeries) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| NilmError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for (i, v) in s.values.iter().enumerate() {
            // `Display` for f64 prints the shortest text that parses back to the same bits.
            writeln!(w, "{},{}", s.timestamp(i), v)?;
        }
        w.flush()
    };
    write().map_err(|e| NilmError::io(path, e))
}

fn read_channel(path: &Path, kind: SeriesKind, start_time: i64, step: i64, samples: usize) -> Result<SampledSeries> {
    let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(NilmError::VersionMismatch { path: path.into(), expected: CSV_HEADER.into(), found: header.into() });
    }
    let mut values = Vec::with_capacity(samples);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let (ts, v) = line.split_once(',').ok_or(NilmError::ParseError { line: lineno, msg: "expected two fields".into() })?;
        let ts: i64 = ts.parse().map_err(|_| NilmError::ParseError { line: lineno, msg: "bad timestamp".into() })?;
        if ts != start_time + step * i as i64 {
            return Err(NilmError::ParseError { line: lineno, msg: "timestamp off the manifest grid".into() });
        }
        values.push(v.parse().map_err(|_| NilmError::ParseError { line: lineno, msg: "bad value".into() })?);
    }
    if values.len() != samples {
        return Err(NilmError::DomainMismatch { expected: samples, got: values.len() });
    }
    Ok(SampledSeries::new(start_time, step, values, kind))
}

/// Writes the dataset into `dir` (created if missing).
pub fn export_dataset(ds: &HouseDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| NilmError::io(dir, e))?;
    let mut channels = vec![
        (Channel { name: "aggregate_power".into(), kind: SeriesKind::Power, appliance: None, file: "aggregate_power.csv".into() }, &ds.aggregate_power),
        (Channel { name: "aggregate_water".into(), kind: SeriesKind::Water, appliance: None, file: "aggregate_water.csv".into() }, &ds.aggregate_water),
    ];
    for (id, s) in &ds.appliance_power {
        channels.push((Channel { name: format!("power_{id}"), kind: SeriesKind::Power, appliance: Some(id.clone()), file: format!("power_{id}.csv") }, s));
    }
    for (id, s) in &ds.appliance_water {
        channels.push((Channel { name: format!("water_{id}"), kind: SeriesKind::Water, appliance: Some(id.clone()), file: format!("water_{id}.csv") }, s));
    }
    for (ch, s) in &channels {
        write_channel(&dir.join(&ch.file), s)?;
    }
    let manifest = Manifest {
        version: DATASET_FORMAT_VERSION.into(),
        start_time: ds.aggregate_power.start_time,
        step: ds.step(),
        samples: ds.len(),
        registry: ds.registry.clone(),
        sim_config: ds.sim_config.clone(),
        channels: channels.into_iter().map(|(c, _)| c).collect(),
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| NilmError::Format(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| NilmError::io(&path, e))
}

/// Reads a dataset written by [`export_dataset`].
pub fn import_dataset(dir: &Path) -> Result<HouseDataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| NilmError::io(&path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| NilmError::Format(format!("{}: {e}", path.display())))?;
    let found = raw.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if found != DATASET_FORMAT_VERSION {
        return Err(NilmError::VersionMismatch { path, expected: DATASET_FORMAT_VERSION.into(), found: found.into() });
    }
    let m: Manifest = serde_json::from_value(raw).map_err(|e| NilmError::Format(format!("{}: {e}", path.display())))?;
    m.registry.validate()?;

    let mut aggregate_power = None;
    let mut aggregate_water = None;
    let mut ds = HouseDataset {
        registry: m.registry,
        aggregate_power: SampledSeries::power(vec![]),
        aggregate_water: SampledSeries::water(vec![]),
        appliance_power: Default::default(),
        appliance_water: Default::default(),
        sim_config: m.sim_config,
    };
    for ch in &m.channels {
        let s = read_channel(&dir.join(&ch.file), ch.kind, m.start_time, m.step, m.samples)?;
        match (&ch.appliance, ch.kind) {
            (None, SeriesKind::Power) => aggregate_power = Some(s),
            (None, SeriesKind::Water) => aggregate_water = Some(s),
            (Some(id), SeriesKind::Power) => {
                ds.appliance_power.insert(id.clone(), s);
            }
            (Some(id), SeriesKind::Water) => {
                ds.appliance_water.insert(id.clone(), s);
            }
        }
    }
    ds.aggregate_power = aggregate_power.ok_or_else(|| NilmError::Format("manifest lacks aggregate_power".into()))?;
    ds.aggregate_water = aggregate_water.ok_or_else(|| NilmError::Format("manifest lacks aggregate_water".into()))?;
    ds.validate()?;
    Ok(ds)
}
