//! Detection thresholds, windows and timers.
//!
//! Every duration is expressed in whole seconds and converted to
//! milliseconds at the point of use. Defaults are the documented operating
//! point; all of them can be overridden from a JSON settings file.

use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::escalation::EscalationPolicy;

const DAY_MS: u64 = 24 * 60 * 60 * 1000;

/// Local time-of-day interval. Wraps past midnight when `start > end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SleepWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl Default for SleepWindow {
    fn default() -> Self {
        Self {
            start: NaiveTime::from_hms_opt(22, 0, 0).unwrap(),
            end: NaiveTime::from_hms_opt(7, 0, 0).unwrap(),
        }
    }
}

impl SleepWindow {
    /// `start == end` is treated as an empty window.
    pub fn contains(&self, tod: NaiveTime) -> bool {
        if self.start <= self.end {
            self.start <= tod && tod < self.end
        } else {
            tod >= self.start || tod < self.end
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub immobility_duration_s: u64,
    pub hr_absence_timeout_s: u64,
    pub baseline_window_s: u64,
    pub hr_trend_window_s: u64,
    pub hr_slope_min_bpm_per_min: f64,
    pub tachycardia_abs_bpm: f64,
    pub tachycardia_rel_factor: f64,
    pub moisture_rise_pct: f64,
    pub ack_window_s: u64,
    pub alarm_cooldown_s: u64,
    pub activity_window_s: u64,
    pub motion_threshold_g: f64,
    pub sleep_window: SleepWindow,
    /// Local time of day that corresponds to `t_ms = 0`.
    pub clock_origin: NaiveTime,
    pub reminder_interval_s: u64,
    pub min_slope_samples: usize,
    pub min_baseline_samples: usize,
    pub escalation: EscalationPolicy,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            immobility_duration_s: 300,
            hr_absence_timeout_s: 30,
            baseline_window_s: 120,
            hr_trend_window_s: 180,
            hr_slope_min_bpm_per_min: 3.0,
            tachycardia_abs_bpm: 100.0,
            tachycardia_rel_factor: 1.2,
            moisture_rise_pct: 15.0,
            ack_window_s: 60,
            alarm_cooldown_s: 600,
            activity_window_s: 10,
            motion_threshold_g: 0.05,
            sleep_window: SleepWindow::default(),
            clock_origin: NaiveTime::from_hms_opt(22, 0, 0).unwrap(),
            reminder_interval_s: 1800,
            min_slope_samples: 10,
            min_baseline_samples: 30,
            escalation: EscalationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl ConfigError {
    fn new(field: &'static str, reason: &'static str) -> Self {
        Self { field, reason }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let durations = [
            ("immobility_duration_s", self.immobility_duration_s),
            ("hr_absence_timeout_s", self.hr_absence_timeout_s),
            ("baseline_window_s", self.baseline_window_s),
            ("hr_trend_window_s", self.hr_trend_window_s),
            ("ack_window_s", self.ack_window_s),
            ("alarm_cooldown_s", self.alarm_cooldown_s),
            ("activity_window_s", self.activity_window_s),
            ("reminder_interval_s", self.reminder_interval_s),
        ];
        for (field, value) in durations {
            if value == 0 {
                return Err(ConfigError::new(field, "must be > 0"));
            }
        }
        let positive = [
            ("hr_slope_min_bpm_per_min", self.hr_slope_min_bpm_per_min),
            ("tachycardia_abs_bpm", self.tachycardia_abs_bpm),
            ("moisture_rise_pct", self.moisture_rise_pct),
            ("motion_threshold_g", self.motion_threshold_g),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::new(field, "must be finite and > 0"));
            }
        }
        if !(self.tachycardia_rel_factor.is_finite() && self.tachycardia_rel_factor >= 1.0) {
            return Err(ConfigError::new("tachycardia_rel_factor", "must be >= 1"));
        }
        if self.min_slope_samples < 2 {
            return Err(ConfigError::new("min_slope_samples", "must be >= 2"));
        }
        if self.min_baseline_samples == 0 {
            return Err(ConfigError::new("min_baseline_samples", "must be >= 1"));
        }
        if self.escalation.per_contact_timeout_s == 0 {
            return Err(ConfigError::new("escalation.per_contact_timeout_s", "must be >= 1"));
        }
        if self.escalation.max_rounds == 0 {
            return Err(ConfigError::new("escalation.max_rounds", "must be >= 1"));
        }
        Ok(())
    }

    /// Local time of day at session time `t_ms`.
    pub fn local_time_of_day(&self, t_ms: u64) -> NaiveTime {
        let origin_ms = u64::from(self.clock_origin.num_seconds_from_midnight()) * 1000
            + u64::from(self.clock_origin.nanosecond() / 1_000_000);
        let tod_ms = (origin_ms + t_ms % DAY_MS) % DAY_MS;
        let secs = (tod_ms / 1000) as u32;
        let nanos = ((tod_ms % 1000) * 1_000_000) as u32;
        NaiveTime::from_num_seconds_from_midnight_opt(secs, nanos).expect("time of day in range")
    }

    pub fn in_sleep_window(&self, t_ms: u64) -> bool {
        self.sleep_window.contains(self.local_time_of_day(t_ms))
    }

    pub(crate) fn activity_window_ms(&self) -> u64 {
        self.activity_window_s * 1000
    }
    pub(crate) fn hr_timeout_ms(&self) -> u64 {
        self.hr_absence_timeout_s * 1000
    }
    pub(crate) fn trend_window_ms(&self) -> u64 {
        self.hr_trend_window_s * 1000
    }
    pub(crate) fn baseline_window_ms(&self) -> u64 {
        self.baseline_window_s * 1000
    }
}
