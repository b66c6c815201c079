//! Deterministic synthetic sessions.
//!
//! Every scenario is a pure function of its [`ScenarioSpec`]. Randomness
//! comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`; Gaussian noise is drawn with `rand_distr::Normal`.
//! Records are emitted at 1 Hz starting at `t_ms = 0`, and values are
//! rounded (acceleration to 1e-4 g, heart rate and humidity to 0.1) so the
//! CSV stays short.
//!
//! Phase timings are laid out against the default detection config: a
//! 60 s activity burst, then stillness, with danger phases placed after
//! the detector would have finished its immobility wait and baseline.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::trace::{Action, TraceRecord};

const MAX_DURATION_S: u64 = 7 * 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RestfulSleep,
    ExerciseThenRest,
    HypoglycemicComa,
    HyperglycemicComa,
    DeviceRemoved,
    NightmareFalsePositive,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::RestfulSleep,
        ScenarioKind::ExerciseThenRest,
        ScenarioKind::HypoglycemicComa,
        ScenarioKind::HyperglycemicComa,
        ScenarioKind::DeviceRemoved,
        ScenarioKind::NightmareFalsePositive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::RestfulSleep => "restful_sleep",
            ScenarioKind::ExerciseThenRest => "exercise_then_rest",
            ScenarioKind::HypoglycemicComa => "hypoglycemic_coma",
            ScenarioKind::HyperglycemicComa => "hyperglycemic_coma",
            ScenarioKind::DeviceRemoved => "device_removed",
            ScenarioKind::NightmareFalsePositive => "nightmare_false_positive",
        }
    }

    /// Long enough to play out the whole storyline.
    pub fn default_duration_s(self) -> u64 {
        match self {
            ScenarioKind::RestfulSleep => 1800,
            ScenarioKind::ExerciseThenRest => 1200,
            ScenarioKind::HypoglycemicComa | ScenarioKind::HyperglycemicComa => 780,
            ScenarioKind::DeviceRemoved => 900,
            ScenarioKind::NightmareFalsePositive => 1200,
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    /// Standard deviation per acceleration axis while still, in g.
    pub accel_g: f64,
    pub hr_bpm: f64,
    pub rh_pct: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            accel_g: 0.004,
            hr_bpm: 0.8,
            rh_pct: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration_s: u64,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseLevels,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            duration_s: kind.default_duration_s(),
            seed,
            noise: NoiseLevels::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_s == 0 {
            return Err(ScenarioError::InvalidSpec("duration_s must be > 0"));
        }
        if self.duration_s > MAX_DURATION_S {
            return Err(ScenarioError::InvalidSpec("duration_s exceeds one week"));
        }
        let n = self.noise;
        if [n.accel_g, n.hr_bpm, n.rh_pct]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(ScenarioError::InvalidSpec("noise levels must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(&'static str),
}

/// Phase boundaries of a scenario storyline, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Markers {
    /// First still record after the opening activity burst.
    pub stillness_onset_ms: u64,
    pub ramp_start_ms: Option<u64>,
    pub ramp_end_ms: Option<u64>,
    pub removal_ms: Option<u64>,
    pub reentry_ms: Option<u64>,
    pub ack_ms: Option<u64>,
}

const BURST_END_S: u64 = 60;
// stillness onset + activity window + immobility + baseline, plus slack
const DANGER_START_S: u64 = BURST_END_S + 440;
const COMA_RAMP_S: u64 = 240;
const REMOVAL_S: u64 = BURST_END_S + 360;
const REENTRY_S: u64 = REMOVAL_S + 240;
const NIGHTMARE_RISE_S: u64 = 90;
const NIGHTMARE_HOLD_S: u64 = 30;
const NIGHTMARE_FALL_S: u64 = 60;
const EXERCISE_END_S: u64 = 240;
const ROLLOVER_S: u64 = 5;

pub fn markers(kind: ScenarioKind) -> Markers {
    let s = |secs: u64| secs * 1000;
    let mut m = Markers {
        stillness_onset_ms: s(BURST_END_S),
        ..Default::default()
    };
    match kind {
        ScenarioKind::HypoglycemicComa | ScenarioKind::HyperglycemicComa => {
            m.ramp_start_ms = Some(s(DANGER_START_S));
            m.ramp_end_ms = Some(s(DANGER_START_S + COMA_RAMP_S));
        }
        ScenarioKind::DeviceRemoved => {
            m.removal_ms = Some(s(REMOVAL_S));
            m.reentry_ms = Some(s(REENTRY_S));
        }
        ScenarioKind::NightmareFalsePositive => {
            m.ramp_start_ms = Some(s(DANGER_START_S));
            m.ramp_end_ms = Some(s(DANGER_START_S + NIGHTMARE_RISE_S));
            m.ack_ms = Some(s(DANGER_START_S + NIGHTMARE_RISE_S));
        }
        ScenarioKind::ExerciseThenRest => {
            m.stillness_onset_ms = s(EXERCISE_END_S);
        }
        ScenarioKind::RestfulSleep => {}
    }
    m
}

/// What the wearer is doing at one instant.
struct Moment {
    moving: bool,
    worn: bool,
    hr: f64,
    rh: f64,
    ack: bool,
}

fn lerp(from: f64, to: f64, frac: f64) -> f64 {
    from + (to - from) * frac.clamp(0.0, 1.0)
}

fn moment(kind: ScenarioKind, duration_s: u64, k: u64) -> Moment {
    let kf = k as f64;
    let burst = k < BURST_END_S;
    let mut m = Moment {
        moving: burst,
        worn: true,
        hr: if burst { 78.0 } else { 70.0 },
        rh: 40.0,
        ack: false,
    };
    match kind {
        ScenarioKind::RestfulSleep => {
            let rollover = (duration_s * 2 / 5).max(BURST_END_S + 1);
            m.moving = burst || (rollover..rollover + ROLLOVER_S).contains(&k);
            if !burst {
                m.hr = lerp(64.0, 58.0, (kf - BURST_END_S as f64) / 1200.0);
            }
        }
        ScenarioKind::ExerciseThenRest => {
            let end = EXERCISE_END_S as f64;
            m.moving = k < EXERCISE_END_S;
            if m.moving {
                m.hr = lerp(75.0, 145.0, kf / end);
                m.rh = lerp(40.0, 55.0, kf / end);
            } else {
                let since = kf - end;
                m.hr = 72.0 + (145.0 - 72.0) * (-since / 90.0).exp();
                m.rh = 42.0 + (55.0 - 42.0) * (-since / 120.0).exp();
            }
        }
        ScenarioKind::HypoglycemicComa | ScenarioKind::HyperglycemicComa => {
            if k >= DANGER_START_S {
                let frac = (k - DANGER_START_S) as f64 / COMA_RAMP_S as f64;
                m.hr = lerp(70.0, 120.0, frac);
                if kind == ScenarioKind::HypoglycemicComa {
                    m.rh = lerp(40.0, 62.0, frac);
                }
            }
        }
        ScenarioKind::DeviceRemoved => {
            m.hr = if burst { 78.0 } else { 68.0 };
            if (REMOVAL_S..REENTRY_S + 30).contains(&k) {
                m.worn = false;
            }
            if (REENTRY_S..REENTRY_S + 30).contains(&k) {
                m.moving = true;
            }
        }
        ScenarioKind::NightmareFalsePositive => {
            m.hr = if burst { 75.0 } else { 66.0 };
            let rise_end = DANGER_START_S + NIGHTMARE_RISE_S;
            let hold_end = rise_end + NIGHTMARE_HOLD_S;
            if (DANGER_START_S..rise_end).contains(&k) {
                m.hr = lerp(66.0, 112.0, (k - DANGER_START_S) as f64 / NIGHTMARE_RISE_S as f64);
            } else if (rise_end..hold_end).contains(&k) {
                m.hr = 112.0;
            } else if (hold_end..hold_end + NIGHTMARE_FALL_S).contains(&k) {
                m.hr = lerp(112.0, 66.0, (k - hold_end) as f64 / NIGHTMARE_FALL_S as f64);
            }
            m.ack = k == rise_end;
            // wakes up and shifts in bed right after acknowledging
            if (rise_end + 5..rise_end + 20).contains(&k) {
                m.moving = true;
            }
        }
    }
    m
}

/// Rounds to `decimals` places, landing on the nearest double to the decimal.
fn round_to(v: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (v * p).round() / p
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated noise level")
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Vec<TraceRecord>, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let accel_noise = normal(spec.noise.accel_g);
    let hr_noise = normal(spec.noise.hr_bpm);
    let rh_noise = normal(spec.noise.rh_pct);

    let mut out = Vec::with_capacity(spec.duration_s as usize);
    for k in 0..spec.duration_s {
        let m = moment(spec.kind, spec.duration_s, k);
        let accel = if m.moving {
            // arm swing: a few tenths of a g around gravity
            let phase = 2.0 * PI * (k as f64) / 2.7;
            [
                0.35 * phase.sin() + rng.random_range(-0.25..0.25),
                0.25 * phase.cos() + rng.random_range(-0.25..0.25),
                1.0 + rng.random_range(-0.3..0.3),
            ]
        } else {
            [
                accel_noise.sample(&mut rng),
                accel_noise.sample(&mut rng),
                1.0 + accel_noise.sample(&mut rng),
            ]
        };
        let hr = m
            .worn
            .then(|| round_to(m.hr + hr_noise.sample(&mut rng), 1).clamp(20.0, 250.0));
        let rh = m
            .worn
            .then(|| round_to(m.rh + rh_noise.sample(&mut rng), 1).clamp(0.0, 100.0));
        out.push(TraceRecord {
            t_ms: k * 1000,
            ax_g: round_to(accel[0], 4),
            ay_g: round_to(accel[1], 4),
            az_g: round_to(accel[2], 4),
            hr_bpm: hr,
            skin_rh: rh,
            action: m.ack.then_some(Action::Ack),
        });
    }
    Ok(out)
}

/// A random stream of motion and stillness segments with drifting,
/// ramping or missing vital signs, irregular cadence, sensor dropouts and
/// occasional acknowledgements. Deterministic for a given seed.
pub fn random_trace(seed: u64, duration_s: u64) -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end_ms = duration_s * 1000;
    let mut out = Vec::new();
    let mut t = 0u64;
    let mut hr = rng.random_range(55.0..90.0);
    let mut rh = rng.random_range(30.0..50.0);
    while t < end_ms {
        let seg_end = t + rng.random_range(20..900) * 1000;
        let moving = rng.random_bool(0.25);
        let hr_present = rng.random_bool(0.9);
        let rh_present = rng.random_bool(0.8);
        // bpm and %RH per minute
        let hr_rate = if rng.random_bool(0.4) { rng.random_range(-10.0..25.0) } else { 0.0 };
        let rh_rate = if rng.random_bool(0.3) { rng.random_range(-3.0..10.0) } else { 0.0 };
        let amplitude = rng.random_range(0.0..0.6);
        while t < seg_end.min(end_ms) {
            let still = rng.random_range(-0.003..0.003);
            let accel = if moving {
                [
                    rng.random_range(-amplitude..=amplitude),
                    rng.random_range(-amplitude..=amplitude),
                    1.0 + rng.random_range(-amplitude..=amplitude),
                ]
            } else {
                [still, -still, 1.0 + still]
            };
            out.push(TraceRecord {
                t_ms: t,
                ax_g: round_to(accel[0], 4),
                ay_g: round_to(accel[1], 4),
                az_g: round_to(accel[2], 4),
                hr_bpm: hr_present.then(|| round_to(hr + rng.random_range(-1.0..1.0), 1)),
                skin_rh: rh_present.then(|| round_to(rh + rng.random_range(-0.5..0.5), 1)),
                action: rng.random_bool(0.004).then_some(Action::Ack),
            });
            let step = if rng.random_bool(0.01) {
                rng.random_range(5_000..45_000)
            } else {
                rng.random_range(500..1_500)
            };
            t += step;
            let minutes = step as f64 / 60_000.0;
            hr = (hr + hr_rate * minutes).clamp(40.0, 190.0);
            rh = (rh + rh_rate * minutes).clamp(10.0, 95.0);
        }
    }
    out
}
