//! Phase-1 K-nearest-neighbour event classifier.
//!
//! The model is a linear scan over the scaled training matrix. Neighbour selection
//! includes every training point tied with the k-th distance, votes are counted per
//! label, and vote ties go to the label with the smallest mean neighbour distance,
//! then to the smallest label. All of this is independent of training-set order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{NilmError, Result};
use crate::preprocess::{fit_scaler, ScalerParams};
use crate::types::{EventLabel, LabeledEventSet};

pub const DEFAULT_K: usize = 7;
pub const DEFAULT_MINKOWSKI_P: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub minkowski_p: f64,
    pub scaler: ScalerParams,
    /// Scaled training features, row-major.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<EventLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: EventLabel,
    /// Distances of the voting neighbours, ascending.
    pub neighbor_distances: Vec<f64>,
}

pub fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Fits the scaler on the known-label rows of `train` and stores them.
pub fn knn_fit(train: &LabeledEventSet, k: usize, minkowski_p: f64) -> Result<KnnModel> {
    train.check()?;
    let known = train.known();
    if known.is_empty() {
        return Err(NilmError::EmptyTrain);
    }
    if k <= 1 {
        return Err(NilmError::KTooSmall(k));
    }
    if k > known.len() {
        return Err(NilmError::KTooLarge { k, n: known.len() });
    }
    if !(minkowski_p >= 1.0 && minkowski_p.is_finite()) {
        return Err(NilmError::InvalidExponent(minkowski_p));
    }
    let scaler = fit_scaler(&known.features)?;
    let features = known.features.iter().map(|r| scaler.apply(r)).collect::<Result<_>>()?;
    Ok(KnnModel { k, minkowski_p, scaler, features, labels: known.labels.into_iter().flatten().collect() })
}

impl KnnModel {
    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    /// Classifies a query given in raw (unscaled) feature units.
    pub fn predict(&self, feature: &[f64]) -> Result<Prediction> {
        let q = self.scaler.apply(feature)?;
        Ok(self.predict_scaled(&q))
    }

    fn predict_scaled(&self, q: &[f64]) -> Prediction {
        let dist: Vec<f64> = self.features.iter().map(|x| minkowski(x, q, self.minkowski_p)).collect();
        let mut order: Vec<usize> = (0..dist.len()).collect();
        let kth = self.k - 1;
        order.select_nth_unstable_by(kth, |&a, &b| dist[a].total_cmp(&dist[b]));
        let radius = dist[order[kth]];

        let mut votes: BTreeMap<&EventLabel, Vec<f64>> = BTreeMap::new();
        let mut neighbor_distances = Vec::new();
        for (i, &d) in dist.iter().enumerate() {
            if d <= radius {
                votes.entry(&self.labels[i]).or_default().push(d);
                neighbor_distances.push(d);
            }
        }
        neighbor_distances.sort_by(f64::total_cmp);
        let mut best: Option<(&EventLabel, usize, f64)> = None;
        for (label, ds) in &mut votes {
            ds.sort_by(f64::total_cmp);
            let mean = ds.iter().sum::<f64>() / ds.len() as f64;
            let better = match best {
                None => true,
                // Labels are visited in ascending order, so strict comparisons keep the lowest label on full ties.
                Some((_, count, m)) => ds.len() > count || (ds.len() == count && mean < m),
            };
            if better {
                best = Some((label, ds.len(), mean));
            }
        }
        let label = best.expect("k >= 2 neighbours").0.clone();
        Prediction { label, neighbor_distances }
    }

    /// Writes the scaled training matrix with its labels and hyper-parameters as CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        let mut out = String::new();
        out.push_str(&format!("#nilm-knn/1 k={} p={}\n", self.k, self.minkowski_p));
        out.push_str(&format!("#scaler min={} max={}\n", join(&self.scaler.min), join(&self.scaler.max)));
        let cols: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        out.push_str(&format!("appliance,from_mode,to_mode,{}\n", cols.join(",")));
        for (x, l) in self.features.iter().zip(&self.labels) {
            let xs: Vec<String> = x.iter().map(f64::to_string).collect();
            out.push_str(&format!("{},{},{},{}\n", l.appliance, l.transition.from_mode(), l.transition.to_mode(), xs.join(",")));
        }
        let mut f = fs::File::create(path).map_err(|e| NilmError::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| NilmError::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
        let bad = |line: usize, msg: &str| NilmError::ParseError { line, msg: msg.into() };
        let mut lines = text.lines();
        let head = lines.next().unwrap_or_default();
        let rest = head.strip_prefix("#nilm-knn/1 ").ok_or_else(|| NilmError::VersionMismatch {
            path: path.into(),
            expected: "#nilm-knn/1".into(),
            found: head.into(),
        })?;
        let mut k = None;
        let mut p = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("k", v)) => k = v.parse().ok(),
                Some(("p", v)) => p = v.parse().ok(),
                _ => {}
            }
        }
        let (k, p) = k.zip(p).ok_or_else(|| bad(1, "missing k or p"))?;
        let parse_list = |s: &str| s.split(';').map(|x| x.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
        let sc = lines.next().and_then(|l| l.strip_prefix("#scaler ")).ok_or_else(|| bad(2, "missing scaler"))?;
        let (min, max) = sc.split_once(' ').ok_or_else(|| bad(2, "bad scaler"))?;
        let min = min.strip_prefix("min=").map(parse_list).and_then(|r| r.ok()).ok_or_else(|| bad(2, "bad scaler min"))?;
        let max = max.strip_prefix("max=").map(parse_list).and_then(|r| r.ok()).ok_or_else(|| bad(2, "bad scaler max"))?;
        lines.next();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 4;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 + min.len() {
                return Err(bad(lineno, "wrong field count"));
            }
            let from: usize = fields[1].parse().map_err(|_| bad(lineno, "bad mode"))?;
            let to: usize = fields[2].parse().map_err(|_| bad(lineno, "bad mode"))?;
            labels.push(EventLabel::new(fields[0], from, to));
            features.push(fields[3..].iter().map(|x| x.parse().map_err(|_| bad(lineno, "bad feature"))).collect::<Result<Vec<f64>>>()?);
        }
        if features.is_empty() {
            return Err(NilmError::EmptyTrain);
        }
        if k <= 1 || k > features.len() {
            return Err(NilmError::KTooLarge { k, n: features.len() });
        }
        Ok(Self { k, minkowski_p: p, scaler: ScalerParams { min, max }, features, labels })
    }
}

pub fn knn_predict(model: &KnnModel, event_feature: &[f64]) -> Result<Prediction> {
    model.predict(event_feature)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedEvent {
    pub index: usize,
    pub delta: f64,
    pub label: EventLabel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifiedStream {
    /// Every event with its predicted label, in time order.
    pub events: Vec<ClassifiedEvent>,
    /// Events grouped by predicted appliance.
    pub per_appliance: BTreeMap<String, Vec<ClassifiedEvent>>,
    /// Events whose predicted appliance is in the overlap group (routed to Phase 2).
    pub ambiguous: Vec<ClassifiedEvent>,
}

/// Labels every detected event and splits off those predicted as overlap-group appliances.
pub fn knn_classify_stream(model: &KnnModel, detection: &Detection, overlap: &BTreeSet<String>) -> Result<ClassifiedStream> {
    let feats = detection.features();
    if let Some(f) = feats.first() {
        if f.len() != model.dim() {
            return Err(NilmError::DimensionMismatch { expected: model.dim(), got: f.len() });
        }
    }
    let labels: Vec<EventLabel> = feats.par_iter().map(|f| model.predict(f).map(|p| p.label)).collect::<Result<_>>()?;
    let mut out = ClassifiedStream::default();
    for (e, label) in detection.events.events.iter().zip(labels) {
        let ce = ClassifiedEvent { index: e.index, delta: e.delta, label };
        out.per_appliance.entry(ce.label.appliance.clone()).or_default().push(ce.clone());
        if overlap.contains(&ce.label.appliance) {
            out.ambiguous.push(ce.clone());
        }
        out.events.push(ce);
    }
    Ok(out)
}
