//! Offline replay of traces on logical time.
//!
//! The event log depends only on the records, configuration, contacts,
//! gateway script and tick period. The speed multiplier only controls how a
//! [`Pacer`] spaces the inputs out in wall-clock time.

use std::time::{Duration, Instant};

use crate::config::{ConfigError, DetectionConfig};
use crate::detector::{Detector, DetectorError};
use crate::driver::{Driver, Poll};
use crate::escalation::ContactList;
use crate::event::OutputEvent;
use crate::features::FeatureFrame;
use crate::gateway::GatewayScript;
use crate::trace::TraceRecord;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("speed must be finite and > 0, got {0}")]
    InvalidSpeed(f64),
    #[error("tick period must be > 0")]
    InvalidTickPeriod,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace line {line}: {source}")]
    Detector {
        line: usize,
        #[source]
        source: DetectorError,
    },
}

/// Wall-clock pacing for replays.
pub trait Pacer {
    /// Called before the record at logical time `t_ms` is applied.
    fn wait_until(&mut self, t_ms: u64, speed: f64);
}

/// Replays as fast as possible.
#[derive(Debug, Default, Clone, Copy)]
pub struct Unpaced;

impl Pacer for Unpaced {
    fn wait_until(&mut self, _t_ms: u64, _speed: f64) {}
}

/// Sleeps so that logical time advances `speed` times faster than the wall
/// clock, measured from the first record. Deadlines are absolute, so
/// oversleeping does not accumulate.
#[derive(Debug, Default)]
pub struct WallClockPacer {
    anchor: Option<(Instant, u64)>,
}

impl Pacer for WallClockPacer {
    fn wait_until(&mut self, t_ms: u64, speed: f64) {
        let (start, origin) = *self.anchor.get_or_insert((Instant::now(), t_ms));
        let logical = Duration::from_millis(t_ms.saturating_sub(origin));
        let deadline = start + logical.div_f64(speed);
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub events: Vec<OutputEvent>,
    /// One frame per record, when requested.
    pub frames: Vec<FeatureFrame>,
}

#[derive(Debug, Clone)]
pub struct Replay {
    config: DetectionConfig,
    contacts: ContactList,
    gateway: GatewayScript,
    speed: f64,
    tick_period_s: u64,
    capture_frames: bool,
}

impl Replay {
    pub fn new(config: DetectionConfig, contacts: ContactList) -> Self {
        Self {
            config,
            contacts,
            gateway: GatewayScript::default(),
            speed: 1.0,
            tick_period_s: 1,
            capture_frames: false,
        }
    }

    pub fn gateway(mut self, script: GatewayScript) -> Self {
        self.gateway = script;
        self
    }

    pub fn speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    pub fn tick_period_s(mut self, seconds: u64) -> Self {
        self.tick_period_s = seconds;
        self
    }

    pub fn capture_frames(mut self, on: bool) -> Self {
        self.capture_frames = on;
        self
    }

    pub fn run(&self, records: &[TraceRecord]) -> Result<ReplayOutput, ReplayError> {
        self.run_paced(records, &mut Unpaced)
    }

    pub fn run_paced(
        &self,
        records: &[TraceRecord],
        pacer: &mut dyn Pacer,
    ) -> Result<ReplayOutput, ReplayError> {
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(ReplayError::InvalidSpeed(self.speed));
        }
        if self.tick_period_s == 0 {
            return Err(ReplayError::InvalidTickPeriod);
        }
        let detector = Detector::new(self.config.clone(), self.contacts.clone())?;
        let timeout_ms = self.config.escalation.per_contact_timeout_s * 1000;
        let mut driver = Driver::new(detector, self.tick_period_s * 1000);
        let mut out = ReplayOutput {
            events: Vec::new(),
            frames: Vec::new(),
        };

        for (index, record) in records.iter().enumerate() {
            // header is line 1
            let line = index + 2;
            let wrap = |source| ReplayError::Detector { line, source };
            pacer.wait_until(record.t_ms, self.speed);
            driver.push_record(record).map_err(wrap)?;
            loop {
                match driver.poll().map_err(wrap)? {
                    Poll::Idle => break,
                    Poll::Stepped { input, events } => {
                        if self.capture_frames && matches!(input, crate::InputEvent::Sample(_)) {
                            out.frames.extend(driver.detector().last_frame().copied());
                        }
                        out.events.extend(events);
                    }
                    Poll::Dispatch(req) => {
                        if let Some(outcome) = self.gateway.offline_reply(&req.contact.number, timeout_ms) {
                            let (_, events) = driver.resolve(&req, outcome).map_err(wrap)?;
                            out.events.extend(events);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Replays `records` unpaced with the default gateway script and a 1 s tick.
pub fn replay(
    records: &[TraceRecord],
    config: &DetectionConfig,
    contacts: &ContactList,
) -> Result<Vec<OutputEvent>, ReplayError> {
    Ok(Replay::new(config.clone(), contacts.clone()).run(records)?.events)
}
