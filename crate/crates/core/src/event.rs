//! Output events and their JSON Lines encoding.
//!
//! Each event serializes as one JSON object whose keys come in a fixed
//! order: `t_ms`, `type`, then the type-specific fields. Logs produced from
//! the same inputs are therefore byte-comparable.

use serde::{Deserialize, Serialize};

use crate::escalation::{AttemptOutcome, Channel};
use crate::features::DangerSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Idle,
    Active,
    Immobile,
    Vigil,
    LocalAlarm,
    Escalating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    Acknowledged,
    Exhausted,
}

/// Feature values behind an alarm decision.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlarmEvidence {
    pub hr_now: Option<f64>,
    pub hr_slope_bpm_per_min: Option<f64>,
    pub hr_baseline_bpm: Option<f64>,
    pub rh_now: Option<f64>,
    pub rh_baseline_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    StateChanged {
        from: StateKind,
        to: StateKind,
    },
    AlarmRaised {
        reasons: DangerSet,
        evidence: AlarmEvidence,
    },
    AlarmAcknowledged,
    EscalationStarted,
    ContactAttempt {
        contact_id: String,
        channel: Channel,
        outcome: AttemptOutcome,
    },
    EscalationStopped {
        cause: StopCause,
    },
    WearReminder,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::StateChanged { .. } => "state_changed",
            EventKind::AlarmRaised { .. } => "alarm_raised",
            EventKind::AlarmAcknowledged => "alarm_acknowledged",
            EventKind::EscalationStarted => "escalation_started",
            EventKind::ContactAttempt { .. } => "contact_attempt",
            EventKind::EscalationStopped { .. } => "escalation_stopped",
            EventKind::WearReminder => "wear_reminder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl OutputEvent {
    pub fn new(t_ms: u64, kind: EventKind) -> Self {
        Self { t_ms, kind }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("event log line {line}: {source}")]
pub struct EventLogError {
    pub line: usize,
    #[source]
    pub source: serde_json::Error,
}

/// Renders events as JSON Lines, one LF-terminated object per event.
pub fn to_jsonl(events: &[OutputEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

/// Parses a JSON Lines event log. Blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<OutputEvent>, EventLogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| EventLogError { line: i + 1, source })
        })
        .collect()
}
