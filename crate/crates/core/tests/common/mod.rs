#![allow(dead_code)]

use comaguard_core::scenario::{generate_scenario, ScenarioKind, ScenarioSpec};
use comaguard_core::{Contact, ContactList, DetectionConfig, EscalationPolicy, EventKind, OutputEvent, TraceRecord};

pub fn abe() -> ContactList {
    ContactList::new(vec![
        Contact::new("A", "+15550100"),
        Contact::new("B", "+15550101"),
        Contact::emergency("E", "112"),
    ])
    .unwrap()
}

pub fn scenario(kind: ScenarioKind, seed: u64) -> Vec<TraceRecord> {
    generate_scenario(&ScenarioSpec::new(kind, seed)).unwrap()
}

/// Shorter windows so random traces reach alarms and escalations often.
pub fn compressed_config() -> DetectionConfig {
    DetectionConfig {
        immobility_duration_s: 30,
        baseline_window_s: 20,
        hr_trend_window_s: 30,
        min_baseline_samples: 5,
        ack_window_s: 20,
        alarm_cooldown_s: 60,
        reminder_interval_s: 120,
        escalation: EscalationPolicy {
            per_contact_timeout_s: 10,
            max_rounds: 2,
        },
        ..Default::default()
    }
}

pub fn times_of(events: &[OutputEvent], pred: impl Fn(&EventKind) -> bool) -> Vec<u64> {
    events.iter().filter(|e| pred(&e.kind)).map(|e| e.t_ms).collect()
}

pub fn is_alarm(k: &EventKind) -> bool {
    matches!(k, EventKind::AlarmRaised { .. })
}

pub fn is_attempt(k: &EventKind) -> bool {
    matches!(k, EventKind::ContactAttempt { .. })
}
