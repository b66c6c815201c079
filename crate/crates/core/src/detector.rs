//! The detection flowchart as a timer-driven state machine.
//!
//! ```text
//!            moving                 still for immobility_duration
//!   Idle ───────────► Active ──────────────────────────────► Immobile
//!    ▲                  ▲ ▲                                     │ │
//!    │ not worn         │ │ moving                    baselines │ │ not worn
//!    ├──────────────────┼─┼─────────────────────────────────────┼─┘
//!    │                  │ └────────────── Vigil ◄───────────────┘
//!    │                  │  ack             │ danger
//!    │                  ├──────────── LocalAlarm ◄──┘
//!    │                  │  ack             │ ack window elapsed
//!    │ exhausted        └──────────── Escalating
//!    └─────────────────────────────────────┘
//! ```
//!
//! Time comes only from input timestamps. Every input first fires whatever
//! timers are due at its timestamp; samples additionally carry a fresh
//! feature frame. Movement never cancels an alarm, only an acknowledgement.

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, DetectionConfig};
use crate::escalation::{
    AttemptOutcome, Channel, Contact, ContactList, EscalationError, EscalationRun,
};
use crate::event::{AlarmEvidence, EventKind, OutputEvent, StateKind, StopCause};
use crate::features::{
    danger_assessment, Baselines, DangerSet, FeatureExtractor, FeatureFrame, WearStatus,
};
use crate::sample::{SampleFault, SensorSample};

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorState {
    Idle,
    Active,
    Immobile { entered_at_ms: u64 },
    Vigil { baselines: Baselines },
    LocalAlarm { raised_at_ms: u64, reasons: DangerSet },
    Escalating,
}

impl DetectorState {
    pub fn kind(&self) -> StateKind {
        match self {
            DetectorState::Idle => StateKind::Idle,
            DetectorState::Active => StateKind::Active,
            DetectorState::Immobile { .. } => StateKind::Immobile,
            DetectorState::Vigil { .. } => StateKind::Vigil,
            DetectorState::LocalAlarm { .. } => StateKind::LocalAlarm,
            DetectorState::Escalating => StateKind::Escalating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum InputEvent {
    Sample(SensorSample),
    Acknowledge {
        t_ms: u64,
    },
    Tick {
        t_ms: u64,
    },
    /// Gateway response for the in-flight contact attempt.
    AttemptOutcome {
        t_ms: u64,
        contact_id: String,
        outcome: AttemptOutcome,
    },
}

impl InputEvent {
    pub fn t_ms(&self) -> u64 {
        match self {
            InputEvent::Sample(s) => s.t_ms,
            InputEvent::Acknowledge { t_ms }
            | InputEvent::Tick { t_ms }
            | InputEvent::AttemptOutcome { t_ms, .. } => *t_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("input at {got_ms} ms precedes {last_ms} ms")]
    NonMonotonicInput { last_ms: u64, got_ms: u64 },
    #[error("sample at {t_ms} ms: {fault}")]
    InvalidSample { t_ms: u64, fault: SampleFault },
    #[error(transparent)]
    Escalation(#[from] EscalationError),
}

/// A contact attempt that has started and awaits a gateway response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptRequest {
    /// Start time of the escalation run this attempt belongs to.
    pub run_started_at_ms: u64,
    /// Position of the attempt within its run.
    pub seq: usize,
    pub contact: Contact,
    pub channel: Channel,
    pub started_at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectionConfig,
    contacts: ContactList,
    features: FeatureExtractor,
    state: DetectorState,
    last_input_ms: Option<u64>,
    last_sample_ms: Option<u64>,
    last_motion_ms: u64,
    cooldown_until_ms: Option<u64>,
    last_reminder_ms: Option<u64>,
    last_frame: Option<FeatureFrame>,
    run: Option<EscalationRun>,
}

impl Detector {
    pub fn new(config: DetectionConfig, contacts: ContactList) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            features: FeatureExtractor::new(&config),
            config,
            contacts,
            state: DetectorState::Idle,
            last_input_ms: None,
            last_sample_ms: None,
            last_motion_ms: 0,
            cooldown_until_ms: None,
            last_reminder_ms: None,
            last_frame: None,
            run: None,
        })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    pub fn contacts(&self) -> &ContactList {
        &self.contacts
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Timestamp of the latest accepted input.
    pub fn now_ms(&self) -> Option<u64> {
        self.last_input_ms
    }

    pub fn last_sample_ms(&self) -> Option<u64> {
        self.last_sample_ms
    }

    pub fn last_frame(&self) -> Option<&FeatureFrame> {
        self.last_frame.as_ref()
    }

    pub fn escalation(&self) -> Option<&EscalationRun> {
        self.run.as_ref()
    }

    pub fn in_flight_attempt(&self) -> Option<AttemptRequest> {
        let run = self.run.as_ref()?;
        let f = run.in_flight()?;
        Some(AttemptRequest {
            run_started_at_ms: run.started_at_ms(),
            seq: f.seq,
            contact: run.contacts().as_slice()[f.contact_index].clone(),
            channel: f.channel,
            started_at_ms: f.started_at_ms,
        })
    }

    /// Checks `input` against the detector without changing anything.
    pub fn check(&self, input: &InputEvent) -> Result<(), DetectorError> {
        let t = input.t_ms();
        if let Some(last) = self.last_input_ms {
            if t < last {
                return Err(DetectorError::NonMonotonicInput { last_ms: last, got_ms: t });
            }
        }
        match input {
            InputEvent::Sample(s) => {
                if let Some(last) = self.last_sample_ms {
                    if t <= last {
                        return Err(DetectorError::NonMonotonicInput { last_ms: last, got_ms: t });
                    }
                }
                s.validate()
                    .map_err(|fault| DetectorError::InvalidSample { t_ms: t, fault })?;
            }
            InputEvent::AttemptOutcome { contact_id, .. } => {
                let attempt = self
                    .in_flight_attempt()
                    .ok_or(EscalationError::NoAttemptInFlight)?;
                if &attempt.contact.id != contact_id {
                    return Err(EscalationError::UnknownContact(contact_id.clone()).into());
                }
            }
            InputEvent::Acknowledge { .. } | InputEvent::Tick { .. } => {}
        }
        Ok(())
    }

    /// Applies one input and returns the events it produced. On error the
    /// detector is left untouched.
    pub fn step(&mut self, input: InputEvent) -> Result<Vec<OutputEvent>, DetectorError> {
        self.check(&input)?;
        let t = input.t_ms();
        self.last_input_ms = Some(t);
        let mut out = Vec::new();
        match input {
            InputEvent::Sample(sample) => {
                self.last_sample_ms = Some(t);
                let frame = self.features.push(&sample);
                self.last_frame = Some(frame);
                self.advance(t, Some(&frame), &mut out);
            }
            InputEvent::Tick { .. } => self.advance(t, None, &mut out),
            InputEvent::Acknowledge { .. } => {
                self.advance(t, None, &mut out);
                self.acknowledge(t, &mut out);
            }
            InputEvent::AttemptOutcome {
                contact_id, outcome, ..
            } => {
                let run = self.run.as_mut().expect("checked in-flight attempt");
                let before = run.attempts().len();
                run.record_outcome(&contact_id, outcome, t)?;
                self.emit_attempts(before, &mut out);
                self.pump_escalation(t, &mut out);
            }
        }
        self.maybe_remind(t, &mut out);
        Ok(out)
    }

    fn worn(&self, t: u64) -> bool {
        self.features.wear_status(t) == WearStatus::Worn
    }

    fn transition(&mut self, to: DetectorState, t: u64, out: &mut Vec<OutputEvent>) {
        out.push(OutputEvent::new(
            t,
            EventKind::StateChanged {
                from: self.state.kind(),
                to: to.kind(),
            },
        ));
        self.state = to;
    }

    fn enter_active(&mut self, t: u64, out: &mut Vec<OutputEvent>) {
        self.last_motion_ms = t;
        self.transition(DetectorState::Active, t, out);
    }

    fn advance(&mut self, t: u64, frame: Option<&FeatureFrame>, out: &mut Vec<OutputEvent>) {
        let moving = frame.is_some_and(|f| f.moving);
        let cfg = self.config.clone();
        match self.state.clone() {
            DetectorState::Idle => {
                if moving {
                    self.enter_active(t, out);
                }
            }
            DetectorState::Active => {
                if moving {
                    self.last_motion_ms = t;
                } else if t - self.last_motion_ms >= cfg.immobility_duration_s * 1000 {
                    self.transition(DetectorState::Immobile { entered_at_ms: t }, t, out);
                }
            }
            DetectorState::Immobile {
                entered_at_ms: entered,
            } => {
                if moving {
                    self.enter_active(t, out);
                } else if !self.worn(t) {
                    self.transition(DetectorState::Idle, t, out);
                } else if t - entered >= cfg.baseline_window_s * 1000 {
                    let baselines = self.features.baselines(entered, t);
                    if baselines.is_established() {
                        self.transition(DetectorState::Vigil { baselines }, t, out);
                    }
                }
            }
            DetectorState::Vigil { baselines } => {
                if moving {
                    self.enter_active(t, out);
                } else if !self.worn(t) {
                    self.transition(DetectorState::Idle, t, out);
                } else if let Some(frame) = frame {
                    let cooled = self.cooldown_until_ms.is_none_or(|until| t >= until);
                    let reasons = danger_assessment(frame, &baselines, &cfg)
                        .expect("vigil always holds established baselines");
                    if cooled && !reasons.is_empty() {
                        let evidence = AlarmEvidence {
                            hr_now: frame.hr_now,
                            hr_slope_bpm_per_min: frame.hr_slope_bpm_per_min,
                            hr_baseline_bpm: baselines.hr_baseline_bpm,
                            rh_now: frame.rh_now,
                            rh_baseline_pct: baselines.rh_baseline_pct,
                        };
                        out.push(OutputEvent::new(
                            t,
                            EventKind::AlarmRaised {
                                reasons: reasons.clone(),
                                evidence,
                            },
                        ));
                        self.transition(
                            DetectorState::LocalAlarm {
                                raised_at_ms: t,
                                reasons,
                            },
                            t,
                            out,
                        );
                    }
                }
            }
            DetectorState::LocalAlarm { raised_at_ms, .. } => {
                if t - raised_at_ms >= cfg.ack_window_s * 1000 {
                    out.push(OutputEvent::new(t, EventKind::EscalationStarted));
                    self.transition(DetectorState::Escalating, t, out);
                    self.run = Some(EscalationRun::begin(
                        cfg.escalation,
                        self.contacts.clone(),
                        t,
                    ));
                    self.pump_escalation(t, out);
                }
            }
            DetectorState::Escalating => self.pump_escalation(t, out),
        }
    }

    fn emit_attempts(&self, from: usize, out: &mut Vec<OutputEvent>) {
        let Some(run) = &self.run else { return };
        for rec in &run.attempts()[from..] {
            out.push(OutputEvent::new(
                rec.t_ms,
                EventKind::ContactAttempt {
                    contact_id: rec.contact_id.clone(),
                    channel: rec.channel,
                    outcome: rec.outcome,
                },
            ));
        }
    }

    /// Times out a stale attempt, starts the next one, or ends the run.
    fn pump_escalation(&mut self, t: u64, out: &mut Vec<OutputEvent>) {
        let Some(run) = self.run.as_mut() else { return };
        let before = run.attempts().len();
        let exhausted = run
            .next_attempt(t)
            .expect("active runs are never cancelled")
            .is_none();
        self.emit_attempts(before, out);
        if exhausted {
            self.run = None;
            out.push(OutputEvent::new(
                t,
                EventKind::EscalationStopped {
                    cause: StopCause::Exhausted,
                },
            ));
            self.transition(DetectorState::Idle, t, out);
        }
    }

    fn acknowledge(&mut self, t: u64, out: &mut Vec<OutputEvent>) {
        match self.state {
            DetectorState::LocalAlarm { .. } => {
                out.push(OutputEvent::new(t, EventKind::AlarmAcknowledged));
            }
            DetectorState::Escalating => {
                if let Some(mut run) = self.run.take() {
                    run.cancel(t);
                }
                out.push(OutputEvent::new(
                    t,
                    EventKind::EscalationStopped {
                        cause: StopCause::Acknowledged,
                    },
                ));
            }
            _ => return,
        }
        self.cooldown_until_ms = Some(t + self.config.alarm_cooldown_s * 1000);
        self.enter_active(t, out);
    }

    fn maybe_remind(&mut self, t: u64, out: &mut Vec<OutputEvent>) {
        if self.state != DetectorState::Idle || self.worn(t) || !self.config.in_sleep_window(t) {
            return;
        }
        let due = self
            .last_reminder_ms
            .is_none_or(|last| t - last >= self.config.reminder_interval_s * 1000);
        if due {
            self.last_reminder_ms = Some(t);
            out.push(OutputEvent::new(t, EventKind::WearReminder));
        }
    }
}
