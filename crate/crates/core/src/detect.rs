//! Three-step event detector: moving average, sigma-gated steady-state filter
//! and thresholded differencing of the filtered signal.

use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::types::{Event, EventSignal, SampledSeries};

/// Window length for both the moving average and the local standard deviation.
pub const WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Grid noise standard deviation in watts; gates the filter and thresholds events.
    pub sigma_g: f64,
    pub window: usize,
}

impl DetectorConfig {
    pub fn new(sigma_g: f64) -> Result<Self> {
        let cfg = Self { sigma_g, window: WINDOW };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_g.is_finite() && self.sigma_g > 0.0) {
            return Err(NilmError::InvalidDetector(format!("sigma_g must be > 0, got {}", self.sigma_g)));
        }
        if self.window != WINDOW {
            return Err(NilmError::InvalidDetector(format!("window must be {WINDOW}, got {}", self.window)));
        }
        Ok(())
    }
}

/// Piecewise-constant steady-state signal `P_S(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSeries {
    pub values: Vec<f64>,
}

impl FilteredSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Output of the full detector: the filtered signal and its events.
#[derive(Debug, Clone)]
pub struct Detection {
    pub filtered: FilteredSeries,
    pub events: EventSignal,
}

impl Detection {
    /// Per-event feature vector for the classifier: the signed event value.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.events.events.iter().map(|e| vec![e.delta]).collect()
    }

    /// Steady level just before each event.
    pub fn pre_levels(&self) -> Vec<f64> {
        self.events.events.iter().map(|e| self.filtered.values[e.index - 1]).collect()
    }
}

fn window_mean(v: &[f64], t: usize) -> f64 {
    (v[t] + v[t - 1] + v[t - 2]) / 3.0
}

/// Population standard deviation of the three samples ending at `t` around their mean.
fn window_std(v: &[f64], t: usize) -> f64 {
    let m = window_mean(v, t);
    let ss = (v[t] - m).powi(2) + (v[t - 1] - m).powi(2) + (v[t - 2] - m).powi(2);
    (ss / 3.0).sqrt()
}

/// Causal 3-sample simple moving average. The first two samples average the available prefix.
pub fn smooth_sma(s: &SampledSeries) -> Result<SampledSeries> {
    let v = &s.values;
    if v.len() < WINDOW {
        return Err(NilmError::TooShort { needed: WINDOW, got: v.len() });
    }
    let mut out = Vec::with_capacity(v.len());
    out.push(v[0]);
    out.push(0.5 * (v[0] + v[1]));
    out.extend((2..v.len()).map(|t| window_mean(v, t)));
    Ok(s.with_values(out))
}

/// Builds `P_S(t)`: follows the moving average while the local standard deviation is
/// below `sigma_g`, otherwise holds the previous steady value.
///
/// Warm-up samples (`t < window`) hold the initial level: the first window's mean
/// when that window is quiet, else `P(0)`.
pub fn filter_steady(s: &SampledSeries, cfg: &DetectorConfig) -> Result<FilteredSeries> {
    cfg.validate()?;
    let v = &s.values;
    if v.len() < WINDOW + 1 {
        return Err(NilmError::TooShort { needed: WINDOW + 1, got: v.len() });
    }
    let first = WINDOW - 1;
    let initial = if window_std(v, first) < cfg.sigma_g { window_mean(v, first) } else { v[0] };
    let mut out = vec![initial; v.len()];
    for t in WINDOW..v.len() {
        out[t] = if window_std(v, t) < cfg.sigma_g { window_mean(v, t) } else { out[t - 1] };
    }
    Ok(FilteredSeries { values: out })
}

/// Emits an event wherever consecutive steady values differ by at least `sigma_g`.
pub fn detect_events(f: &FilteredSeries, cfg: &DetectorConfig) -> EventSignal {
    let v = &f.values;
    let events = (1..v.len())
        .filter_map(|t| {
            let delta = v[t] - v[t - 1];
            (delta.abs() >= cfg.sigma_g).then_some(Event { index: t, delta })
        })
        .collect();
    EventSignal { domain_len: v.len(), events }
}

/// Runs filter and event extraction.
pub fn detect(s: &SampledSeries, cfg: &DetectorConfig) -> Result<Detection> {
    let filtered = filter_steady(s, cfg)?;
    let events = detect_events(&filtered, cfg);
    Ok(Detection { filtered, events })
}

/// Data-driven estimate of `sigma_g` from the quietest stretches of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimator {
    /// Fraction of windows (lowest local std first) treated as quiet.
    pub quiet_fraction: f64,
    pub safety_factor: f64,
}

impl Default for SigmaEstimator {
    fn default() -> Self {
        Self { quiet_fraction: 0.5, safety_factor: 3.0 }
    }
}

pub const MIN_ESTIMATE_SAMPLES: usize = 100;

impl SigmaEstimator {
    /// Noise standard deviation before the safety factor.
    ///
    /// Takes the median of the quietest `quiet_fraction` of trailing-window standard
    /// deviations and rescales it by the matching quantile of the 3-sample std
    /// distribution under Gaussian noise (`3 s^2 / sigma^2 ~ chi^2_2`), so the result
    /// is an unbiased estimate of the noise std on stationary segments.
    pub fn noise_std(&self, s: &SampledSeries) -> Result<f64> {
        let v = &s.values;
        if v.len() < MIN_ESTIMATE_SAMPLES {
            return Err(NilmError::TooShort { needed: MIN_ESTIMATE_SAMPLES, got: v.len() });
        }
        if !(self.quiet_fraction > 0.0 && self.quiet_fraction <= 1.0) {
            return Err(NilmError::InvalidDetector(format!("quiet_fraction must be in (0, 1], got {}", self.quiet_fraction)));
        }
        let mut stds: Vec<f64> = (WINDOW - 1..v.len()).map(|t| window_std(v, t)).collect();
        stds.sort_by(f64::total_cmp);
        let quiet = ((stds.len() as f64 * self.quiet_fraction).ceil() as usize).clamp(1, stds.len());
        let quiet = &stds[..quiet];
        let median = if quiet.len() % 2 == 1 {
            quiet[quiet.len() / 2]
        } else {
            0.5 * (quiet[quiet.len() / 2 - 1] + quiet[quiet.len() / 2])
        };
        let q = 0.5 * self.quiet_fraction;
        let quantile = (-2.0 * (1.0 - q).ln() / 3.0).sqrt();
        Ok(median / quantile)
    }

    pub fn sigma_g(&self, s: &SampledSeries) -> Result<f64> {
        Ok(self.safety_factor * self.noise_std(s)?)
    }
}

/// `sigma_g` estimate with the default quiet fraction and safety factor.
pub fn estimate_sigma_g(s: &SampledSeries, quiet_fraction: f64) -> Result<f64> {
    SigmaEstimator { quiet_fraction, ..SigmaEstimator::default() }.sigma_g(s)
}
