use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{NilmError, Result};
use crate::knn::ClassifiedEvent;
use crate::types::{ApplianceSpec, Registry, SampledSeries, SeriesKind};

/// An event that does not move the appliance to a different mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGraphViolation {
    pub index: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub profile: SampledSeries,
    pub violations: Vec<ModeGraphViolation>,
    /// Power moved to the residual, per event index: the leftover level when
    /// the appliance is snapped back to OFF and the deltas of skipped events.
    /// Adding it back to the profile restores the raw integral of the deltas.
    pub corrections: Vec<(usize, f64)>,
}

/// Rebuilds an appliance's power profile from its signed events.
///
/// A mode tracker follows the appliance through its mode graph: after each
/// event it moves to the mode whose midpoint lies nearest to the integrated
/// level plus the event delta. The profile integrates the observed
/// deltas while the appliance is ON and is pinned to zero whenever the tracker
/// reaches OFF. Events that leave the mode unchanged are reported as
/// violations and skipped, so a missed OFF event cannot stack a second ON
/// level on top of the first.
pub fn reconstruct_from_events(events: &[(usize, f64)], spec: &ApplianceSpec, template: &SampledSeries) -> Result<Reconstruction> {
    let n = template.len();
    let mut values = vec![0.0; n];
    let mut violations = Vec::new();
    let mut corrections = Vec::new();
    let mut mode = 0usize;
    let mut level = 0.0;
    let mut last = 0usize;
    for &(index, delta) in events {
        if index >= n || index < last {
            return Err(NilmError::InvalidConfig(format!("event index {index} out of order or outside 0..{n}")));
        }
        values[last..index].fill(level);
        last = index;
        let target = level + delta;
        let next = (0..spec.modes.len())
            .min_by(|&a, &b| (spec.midpoint(a) - target).abs().total_cmp(&(spec.midpoint(b) - target).abs()))
            .expect("modes are non-empty");
        if next == mode {
            violations.push(ModeGraphViolation { index, from: mode, to: next });
            corrections.push((index, delta));
            continue;
        }
        level += delta;
        if next == 0 {
            if level != 0.0 {
                corrections.push((index, level));
            }
            level = 0.0;
        }
        mode = next;
    }
    values[last..].fill(level);
    Ok(Reconstruction { profile: template.with_values(values), violations, corrections })
}

/// Profiles from per-timestep ON bits: the first ON mode's midpoint for power
/// and the water program's mean flow for water.
pub fn reconstruct_from_bits(power_bits: &[u8], water_bits: &[u8], spec: &ApplianceSpec, template: &SampledSeries) -> Result<(SampledSeries, SampledSeries)> {
    if power_bits.len() != template.len() || water_bits.len() != template.len() {
        return Err(NilmError::DomainMismatch { expected: template.len(), got: power_bits.len().min(water_bits.len()) });
    }
    let on_level = if spec.modes.len() > 1 { spec.midpoint(1) } else { 0.0 };
    let flow = spec.water_program.as_ref().filter(|p| !p.is_empty()).map_or(0.0, |p| p.iter().map(|s| s.flow).sum::<f64>() / p.len() as f64);
    let power = power_bits.iter().map(|&b| if b != 0 { on_level } else { 0.0 }).collect();
    let water = water_bits.iter().map(|&b| if b != 0 { flow } else { 0.0 }).collect();
    let mut w = template.with_values(water);
    w.kind = SeriesKind::Water;
    let mut p = template.with_values(power);
    p.kind = SeriesKind::Power;
    Ok((p, w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseReconstruction {
    pub profiles: BTreeMap<String, Reconstruction>,
    /// Everything the appliance profiles do not explain: the initial steady
    /// level, events not attributed to a registered appliance and the
    /// corrections of every profile.
    pub residual: Vec<f64>,
}

impl HouseReconstruction {
    /// Per-sample sum of all profiles and the residual.
    pub fn total(&self) -> Vec<f64> {
        let mut total = self.residual.clone();
        for r in self.profiles.values() {
            for (t, v) in total.iter_mut().zip(&r.profile.values) {
                *t += v;
            }
        }
        total
    }
}

/// Reconstructs every appliance from a classified event stream of one detection.
pub fn reconstruct_house(detection: &Detection, classified: &[ClassifiedEvent], registry: &Registry, template: &SampledSeries) -> Result<HouseReconstruction> {
    let n = detection.filtered.len();
    if template.len() != n {
        return Err(NilmError::DomainMismatch { expected: n, got: template.len() });
    }
    let mut per: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    let mut jumps = vec![0.0; n];
    for e in classified {
        match registry.get(&e.label.appliance) {
            Some(spec) => per.entry(spec.id.as_str()).or_default().push((e.index, e.delta)),
            None => jumps[e.index] += e.delta,
        }
    }
    let mut profiles = BTreeMap::new();
    for (id, events) in per {
        let spec = registry.get(id).expect("looked up above");
        let r = reconstruct_from_events(&events, spec, template)?;
        for &(i, c) in &r.corrections {
            jumps[i] += c;
        }
        profiles.insert(id.to_string(), r);
    }
    let mut residual = Vec::with_capacity(n);
    let mut level = detection.filtered.values.first().copied().unwrap_or(0.0);
    for j in jumps {
        level += j;
        residual.push(level);
    }
    Ok(HouseReconstruction { profiles, residual })
}

/// Fraction of samples where `|total - filtered| <= tol`.
pub fn conservation_fraction(recon: &HouseReconstruction, filtered: &[f64], tol: f64) -> Result<f64> {
    let total = recon.total();
    if total.len() != filtered.len() || total.is_empty() {
        return Err(NilmError::DomainMismatch { expected: filtered.len(), got: total.len() });
    }
    let ok = total.iter().zip(filtered).filter(|(a, b)| (*a - *b).abs() <= tol).count();
    Ok(ok as f64 / total.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dryer() -> ApplianceSpec {
        Registry::bundled().get("dryer").unwrap().clone()
    }

    #[test]
    fn dryer_box_pulse() {
        let t = SampledSeries::power(vec![0.0; 80]);
        let r = reconstruct_from_events(&[(10, 4500.0), (50, -4500.0)], &dryer(), &t).unwrap();
        for (i, v) in r.profile.values.iter().enumerate() {
            assert_eq!(*v, if (10..50).contains(&i) { 4500.0 } else { 0.0 });
        }
        assert!(r.violations.is_empty() && r.corrections.is_empty());
    }

    #[test]
    fn no_events_give_zero_profile() {
        let t = SampledSeries::power(vec![3.0; 20]);
        let r = reconstruct_from_events(&[], &dryer(), &t).unwrap();
        assert!(r.profile.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn off_to_off_is_reported_and_skipped() {
        let t = SampledSeries::power(vec![0.0; 30]);
        let r = reconstruct_from_events(&[(5, -4300.0), (10, 4400.0), (20, -4350.0)], &dryer(), &t).unwrap();
        assert_eq!(r.violations, vec![ModeGraphViolation { index: 5, from: 0, to: 0 }]);
        assert_eq!(r.profile.values[4], 0.0);
        assert_eq!(r.profile.values[7], 0.0);
        assert_eq!(r.profile.values[15], 4400.0);
        assert_eq!(r.profile.values[25], 0.0);
        assert_eq!(r.corrections, vec![(5, -4300.0), (20, 50.0)]);
    }

    #[test]
    fn repeated_on_event_is_skipped() {
        let t = SampledSeries::power(vec![0.0; 30]);
        let r = reconstruct_from_events(&[(5, 4400.0), (10, 4500.0), (20, -4450.0)], &dryer(), &t).unwrap();
        assert_eq!(r.violations, vec![ModeGraphViolation { index: 10, from: 1, to: 1 }]);
        assert_eq!(r.profile.values[15], 4400.0);
        assert_eq!(r.profile.values[25], 0.0);
        assert_eq!(r.corrections, vec![(10, 4500.0), (20, -50.0)]);
    }

    #[test]
    fn multi_mode_steps_follow_the_graph() {
        let dw = Registry::bundled().get("dishwasher").unwrap().clone();
        let t = SampledSeries::power(vec![0.0; 40]);
        let r = reconstruct_from_events(&[(2, 160.0), (10, 590.0), (20, -600.0), (30, -150.0)], &dw, &t).unwrap();
        assert!(r.violations.is_empty());
        assert_eq!(r.profile.values[5], 160.0);
        assert_eq!(r.profile.values[15], 750.0);
        assert_eq!(r.profile.values[25], 150.0);
        assert_eq!(r.profile.values[35], 0.0);
    }

    #[test]
    fn bit_profiles() {
        let dw = Registry::bundled().get("dishwasher").unwrap().clone();
        let t = SampledSeries::power(vec![0.0; 3]);
        let (p, w) = reconstruct_from_bits(&[0, 1, 1], &[1, 0, 0], &dw, &t).unwrap();
        assert_eq!(p.values, vec![0.0, 150.0, 150.0]);
        assert_eq!(w.values, vec![4.0, 0.0, 0.0]);
        assert_eq!(w.kind, SeriesKind::Water);
    }
}
