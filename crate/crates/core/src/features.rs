//! Windowed feature extraction over raw samples.
//!
//! The free functions are pure and operate on explicit windows. The
//! [`FeatureExtractor`] keeps bounded sliding windows and produces one
//! [`FeatureFrame`] per sample; time only ever enters through sample
//! timestamps and the `now_ms` arguments.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::DetectionConfig;
use crate::sample::SensorSample;

const MS_PER_MIN: f64 = 60_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("window holds {0} samples, need at least 2")]
    WindowTooSmall(usize),
    #[error("window timestamps are not strictly increasing")]
    InvalidTimestamps,
    #[error("not enough heart-rate readings for a trend")]
    InsufficientData,
    #[error("baselines are not established")]
    BaselineMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WearStatus {
    Worn,
    NotWorn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DangerReason {
    TachycardiaTrend,
    MoistureRise,
}

pub type DangerSet = BTreeSet<DangerReason>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Baselines {
    pub hr_baseline_bpm: Option<f64>,
    pub rh_baseline_pct: Option<f64>,
    pub established_at_ms: Option<u64>,
}

impl Baselines {
    pub fn is_established(&self) -> bool {
        self.hr_baseline_bpm.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub t_ms: u64,
    pub motion_energy_g: f64,
    pub moving: bool,
    pub hr_now: Option<f64>,
    pub hr_slope_bpm_per_min: Option<f64>,
    pub worn: bool,
    pub rh_now: Option<f64>,
}

fn strictly_increasing(mut times: impl Iterator<Item = u64>) -> bool {
    let Some(mut prev) = times.next() else {
        return true;
    };
    for t in times {
        if t <= prev {
            return false;
        }
        prev = t;
    }
    true
}

/// Population standard deviation of `values`, single pass (Welford).
fn welford_std(values: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1.0;
        let delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    if n == 0.0 {
        0.0
    } else {
        (m2 / n).max(0.0).sqrt()
    }
}

/// Least-squares slope in bpm/min, accumulated online.
fn online_slope(points: impl Iterator<Item = (u64, f64)>) -> f64 {
    let mut origin = None;
    let mut n = 0.0;
    let (mut mean_x, mut mean_y, mut cxy, mut m2x) = (0.0, 0.0, 0.0, 0.0);
    for (t, y) in points {
        let t0 = *origin.get_or_insert(t);
        let x = (t - t0) as f64 / MS_PER_MIN;
        n += 1.0;
        let dx = x - mean_x;
        mean_x += dx / n;
        mean_y += (y - mean_y) / n;
        cxy += dx * (y - mean_y);
        m2x += dx * (x - mean_x);
    }
    if m2x > 0.0 {
        cxy / m2x
    } else {
        0.0
    }
}

/// Standard deviation of the acceleration magnitude over `window`, in g.
pub fn motion_energy(window: &[SensorSample]) -> Result<f64, FeatureError> {
    if window.len() < 2 {
        return Err(FeatureError::WindowTooSmall(window.len()));
    }
    if !strictly_increasing(window.iter().map(|s| s.t_ms)) {
        return Err(FeatureError::InvalidTimestamps);
    }
    Ok(welford_std(window.iter().map(SensorSample::accel_magnitude)))
}

/// OLS slope of heart rate against time, in bpm per minute.
///
/// Needs at least `min_samples` readings whose first and last timestamps are
/// at least `min_span_ms` apart.
pub fn hr_slope(
    readings: &[(u64, f64)],
    min_samples: usize,
    min_span_ms: u64,
) -> Result<f64, FeatureError> {
    if !strictly_increasing(readings.iter().map(|r| r.0)) {
        return Err(FeatureError::InvalidTimestamps);
    }
    let span = match (readings.first(), readings.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0,
    };
    if readings.len() < min_samples.max(2) || span < min_span_ms || span == 0 {
        return Err(FeatureError::InsufficientData);
    }
    Ok(online_slope(readings.iter().copied()))
}

/// `NotWorn` iff no heart-rate reading has a timestamp in
/// `[now_ms - timeout_ms, now_ms]`.
pub fn wear_status(recent: &[SensorSample], now_ms: u64, timeout_ms: u64) -> WearStatus {
    let from = now_ms.saturating_sub(timeout_ms);
    let worn = recent
        .iter()
        .any(|s| s.hr_bpm.is_some() && (from..=now_ms).contains(&s.t_ms));
    if worn {
        WearStatus::Worn
    } else {
        WearStatus::NotWorn
    }
}

/// Heart-rate level a reading must reach to count as tachycardia.
pub fn tachycardia_threshold(hr_baseline: f64, config: &DetectionConfig) -> f64 {
    config
        .tachycardia_abs_bpm
        .max(config.tachycardia_rel_factor * hr_baseline)
}

/// Reasons the immobile wearer looks to be in danger. The two reasons are
/// independent; an absent humidity reading or baseline disables
/// `MoistureRise`.
pub fn danger_assessment(
    frame: &FeatureFrame,
    baselines: &Baselines,
    config: &DetectionConfig,
) -> Result<DangerSet, FeatureError> {
    let hr_baseline = baselines
        .hr_baseline_bpm
        .ok_or(FeatureError::BaselineMissing)?;
    let mut reasons = DangerSet::new();
    if let (Some(slope), Some(hr)) = (frame.hr_slope_bpm_per_min, frame.hr_now) {
        if slope >= config.hr_slope_min_bpm_per_min
            && hr >= tachycardia_threshold(hr_baseline, config)
        {
            reasons.insert(DangerReason::TachycardiaTrend);
        }
    }
    if let (Some(rh), Some(rh_base)) = (frame.rh_now, baselines.rh_baseline_pct) {
        if rh - rh_base >= config.moisture_rise_pct {
            reasons.insert(DangerReason::MoistureRise);
        }
    }
    Ok(reasons)
}

/// Median of a non-empty set; mean of the middle pair for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Sliding-window feature state fed one sample at a time.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    activity_ms: u64,
    trend_ms: u64,
    timeout_ms: u64,
    baseline_ms: u64,
    min_slope_samples: usize,
    min_baseline_samples: usize,
    motion_threshold_g: f64,
    motion: VecDeque<(u64, f64)>,
    trend: VecDeque<(u64, f64)>,
    baseline_hr: VecDeque<(u64, f64)>,
    baseline_rh: VecDeque<(u64, f64)>,
    last_hr: Option<(u64, f64)>,
    last_rh: Option<(u64, f64)>,
}

impl FeatureExtractor {
    pub fn new(config: &DetectionConfig) -> Self {
        Self {
            activity_ms: config.activity_window_ms(),
            trend_ms: config.trend_window_ms(),
            timeout_ms: config.hr_timeout_ms(),
            baseline_ms: config.baseline_window_ms(),
            min_slope_samples: config.min_slope_samples,
            min_baseline_samples: config.min_baseline_samples,
            motion_threshold_g: config.motion_threshold_g,
            motion: VecDeque::new(),
            trend: VecDeque::new(),
            baseline_hr: VecDeque::new(),
            baseline_rh: VecDeque::new(),
            last_hr: None,
            last_rh: None,
        }
    }

    /// Folds `sample` into the windows and returns the frame at its time.
    /// Callers guarantee strictly increasing timestamps.
    pub fn push(&mut self, sample: &SensorSample) -> FeatureFrame {
        let t = sample.t_ms;

        self.motion.push_back((t, sample.accel_magnitude()));
        evict_at_or_before(&mut self.motion, t.checked_sub(self.activity_ms));
        if let Some(hr) = sample.hr_bpm {
            self.trend.push_back((t, hr));
            self.baseline_hr.push_back((t, hr));
            self.last_hr = Some((t, hr));
        }
        if let Some(rh) = sample.skin_rh {
            self.baseline_rh.push_back((t, rh));
            self.last_rh = Some((t, rh));
        }
        evict_at_or_before(&mut self.trend, t.checked_sub(self.trend_ms));
        evict_before(&mut self.baseline_hr, t.saturating_sub(self.baseline_ms));
        evict_before(&mut self.baseline_rh, t.saturating_sub(self.baseline_ms));

        let motion_energy_g = if self.motion.len() >= 2 {
            welford_std(self.motion.iter().map(|m| m.1))
        } else {
            0.0
        };
        let hr_slope_bpm_per_min = self.trend_slope();
        let hr_now = self.fresh(self.last_hr, t);
        FeatureFrame {
            t_ms: t,
            motion_energy_g,
            moving: motion_energy_g > self.motion_threshold_g,
            hr_now,
            hr_slope_bpm_per_min,
            worn: hr_now.is_some(),
            rh_now: self.fresh(self.last_rh, t),
        }
    }

    fn trend_slope(&self) -> Option<f64> {
        let (first, last) = (self.trend.front()?, self.trend.back()?);
        let span = last.0 - first.0;
        if self.trend.len() < self.min_slope_samples || span == 0 || span * 2 < self.trend_ms {
            return None;
        }
        Some(online_slope(self.trend.iter().copied()))
    }

    fn fresh(&self, reading: Option<(u64, f64)>, now_ms: u64) -> Option<f64> {
        reading
            .filter(|(t, _)| *t <= now_ms && t + self.timeout_ms >= now_ms)
            .map(|(_, v)| v)
    }

    pub fn wear_status(&self, now_ms: u64) -> WearStatus {
        if self.fresh(self.last_hr, now_ms).is_some() {
            WearStatus::Worn
        } else {
            WearStatus::NotWorn
        }
    }

    /// Medians over readings in `[max(since_ms, now_ms - baseline window), now_ms]`.
    /// A median is absent unless it has enough readings behind it.
    pub fn baselines(&self, since_ms: u64, now_ms: u64) -> Baselines {
        let from = since_ms.max(now_ms.saturating_sub(self.baseline_ms));
        let collect = |q: &VecDeque<(u64, f64)>| -> Option<f64> {
            let mut vals: Vec<f64> = q
                .iter()
                .filter(|(t, _)| (from..=now_ms).contains(t))
                .map(|(_, v)| *v)
                .collect();
            if vals.len() < self.min_baseline_samples {
                return None;
            }
            median(&mut vals)
        };
        let hr = collect(&self.baseline_hr);
        Baselines {
            hr_baseline_bpm: hr,
            rh_baseline_pct: hr.and(collect(&self.baseline_rh)),
            established_at_ms: hr.map(|_| now_ms),
        }
    }
}

fn evict_at_or_before(q: &mut VecDeque<(u64, f64)>, cutoff: Option<u64>) {
    if let Some(cutoff) = cutoff {
        while q.front().is_some_and(|(t, _)| *t <= cutoff) {
            q.pop_front();
        }
    }
}

fn evict_before(q: &mut VecDeque<(u64, f64)>, cutoff: u64) {
    while q.front().is_some_and(|(t, _)| *t < cutoff) {
        q.pop_front();
    }
}
