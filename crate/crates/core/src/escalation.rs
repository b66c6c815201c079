//! Second alarm layer: ordered notification attempts over a contact list.
//!
//! A run walks the contact list in order, one attempt in flight at a time,
//! for up to `max_rounds` passes. Delivery does not end the run; only
//! [`EscalationRun::cancel`] (driven by a wearer acknowledgement) does.
//!
//! Channel policy: contacts are called first. A contact preferring
//! [`ChannelPreference::Both`] gets one follow-up message in the same round
//! when the call is not delivered.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Call,
    Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPreference {
    #[default]
    Call,
    Message,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Delivered,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub number: String,
    #[serde(default)]
    pub channel_preference: ChannelPreference,
    #[serde(default)]
    pub is_emergency: bool,
}

impl Contact {
    pub fn new(id: &str, number: &str) -> Self {
        Self {
            id: id.to_string(),
            label: id.to_string(),
            number: number.to_string(),
            channel_preference: ChannelPreference::Call,
            is_emergency: false,
        }
    }

    pub fn emergency(id: &str, number: &str) -> Self {
        Self {
            is_emergency: true,
            ..Self::new(id, number)
        }
    }

    pub fn with_preference(mut self, preference: ChannelPreference) -> Self {
        self.channel_preference = preference;
        self
    }

    fn first_channel(&self) -> Channel {
        match self.channel_preference {
            ChannelPreference::Message => Channel::Message,
            ChannelPreference::Call | ChannelPreference::Both => Channel::Call,
        }
    }

    /// Attempts this contact can receive within one round.
    pub fn attempts_per_round(&self) -> usize {
        match self.channel_preference {
            ChannelPreference::Both => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContactError {
    #[error("contact `{0}` has an empty number")]
    EmptyNumber(String),
    #[error("contact id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("more than one emergency contact")]
    MultipleEmergency,
}

/// Contacts in escalation order. An emergency contact, if any, is always last.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct ContactList(Vec<Contact>);

impl ContactList {
    /// Validates the list and moves the emergency contact to the end,
    /// keeping the relative order of everyone else.
    pub fn new(contacts: Vec<Contact>) -> Result<Self, ContactError> {
        let mut seen = std::collections::HashSet::new();
        for c in &contacts {
            if c.number.trim().is_empty() {
                return Err(ContactError::EmptyNumber(c.id.clone()));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(ContactError::DuplicateId(c.id.clone()));
            }
        }
        if contacts.iter().filter(|c| c.is_emergency).count() > 1 {
            return Err(ContactError::MultipleEmergency);
        }
        let (emergency, mut ordered): (Vec<_>, Vec<_>) =
            contacts.into_iter().partition(|c| c.is_emergency);
        ordered.extend(emergency);
        Ok(Self(ordered))
    }

    pub fn as_slice(&self) -> &[Contact] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Contact> {
        self.0.iter().find(|c| c.id == id)
    }
}

impl<'de> Deserialize<'de> for ContactList {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let contacts = Vec::<Contact>::deserialize(d)?;
        ContactList::new(contacts).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EscalationPolicy {
    pub per_contact_timeout_s: u64,
    pub max_rounds: u32,
}

impl Default for EscalationPolicy {
    fn default() -> Self {
        Self {
            per_contact_timeout_s: 30,
            max_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub t_ms: u64,
    pub contact_id: String,
    pub channel: Channel,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EscalationError {
    #[error("escalation run was cancelled")]
    Cancelled,
    #[error("no attempt is in flight")]
    NoAttemptInFlight,
    #[error("contact `{0}` is not the in-flight attempt")]
    UnknownContact(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlight {
    pub contact_index: usize,
    pub channel: Channel,
    pub started_at_ms: u64,
    /// Zero-based sequence number of this attempt within the run.
    pub seq: usize,
}

#[derive(Debug, Clone)]
pub struct EscalationRun {
    policy: EscalationPolicy,
    contacts: ContactList,
    started_at_ms: u64,
    round: u32,
    index: usize,
    follow_up: Option<Channel>,
    in_flight: Option<InFlight>,
    started_attempts: usize,
    cancelled_at_ms: Option<u64>,
    attempts: Vec<AttemptRecord>,
}

impl EscalationRun {
    pub fn begin(policy: EscalationPolicy, contacts: ContactList, started_at_ms: u64) -> Self {
        Self {
            policy,
            contacts,
            started_at_ms,
            round: 0,
            index: 0,
            follow_up: None,
            in_flight: None,
            started_attempts: 0,
            cancelled_at_ms: None,
            attempts: Vec::new(),
        }
    }

    pub fn started_at_ms(&self) -> u64 {
        self.started_at_ms
    }

    pub fn contacts(&self) -> &ContactList {
        &self.contacts
    }

    pub fn attempts(&self) -> &[AttemptRecord] {
        &self.attempts
    }

    pub fn in_flight(&self) -> Option<InFlight> {
        self.in_flight
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled_at_ms.is_some()
    }

    /// Current round, starting at 1.
    pub fn round(&self) -> u32 {
        self.round + 1
    }

    /// All contacts have been tried `max_rounds` times and nothing is in flight.
    pub fn exhausted(&self) -> bool {
        self.in_flight.is_none()
            && (self.contacts.is_empty() || self.round >= self.policy.max_rounds)
    }

    /// Returns the attempt that should be in flight at `now_ms`, starting a
    /// new one when the previous attempt finished or exceeded the
    /// per-contact timeout. A timed-out attempt is recorded as
    /// [`AttemptOutcome::Timeout`] at `now_ms`.
    pub fn next_attempt(&mut self, now_ms: u64) -> Result<Option<(&Contact, Channel)>, EscalationError> {
        if self.is_cancelled() {
            return Err(EscalationError::Cancelled);
        }
        if let Some(current) = self.in_flight {
            let timeout_ms = self.policy.per_contact_timeout_s * 1000;
            if now_ms.saturating_sub(current.started_at_ms) > timeout_ms {
                self.finish(AttemptOutcome::Timeout, now_ms);
            }
        }
        if self.in_flight.is_none() && !self.exhausted() {
            let contact = &self.contacts.as_slice()[self.index];
            let channel = self.follow_up.take().unwrap_or_else(|| contact.first_channel());
            self.in_flight = Some(InFlight {
                contact_index: self.index,
                channel,
                started_at_ms: now_ms,
                seq: self.started_attempts,
            });
            self.started_attempts += 1;
        }
        Ok(self
            .in_flight
            .map(|f| (&self.contacts.as_slice()[f.contact_index], f.channel)))
    }

    /// Records the terminal outcome of the in-flight attempt and advances.
    pub fn record_outcome(
        &mut self,
        contact_id: &str,
        outcome: AttemptOutcome,
        t_ms: u64,
    ) -> Result<(), EscalationError> {
        let current = self.in_flight.ok_or(EscalationError::NoAttemptInFlight)?;
        if self.contacts.as_slice()[current.contact_index].id != contact_id {
            return Err(EscalationError::UnknownContact(contact_id.to_string()));
        }
        self.finish(outcome, t_ms);
        Ok(())
    }

    /// Stops the run for good. Idempotent; the attempt log is frozen.
    pub fn cancel(&mut self, t_ms: u64) {
        if self.cancelled_at_ms.is_none() {
            self.cancelled_at_ms = Some(t_ms);
        }
        self.in_flight = None;
    }

    fn finish(&mut self, outcome: AttemptOutcome, t_ms: u64) {
        let Some(current) = self.in_flight.take() else {
            return;
        };
        let contact = &self.contacts.as_slice()[current.contact_index];
        self.attempts.push(AttemptRecord {
            t_ms,
            contact_id: contact.id.clone(),
            channel: current.channel,
            outcome,
        });
        if contact.channel_preference == ChannelPreference::Both
            && current.channel == Channel::Call
            && outcome != AttemptOutcome::Delivered
        {
            self.follow_up = Some(Channel::Message);
            return;
        }
        self.index += 1;
        if self.index == self.contacts.len() {
            self.index = 0;
            self.round += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abe() -> ContactList {
        ContactList::new(vec![
            Contact::new("A", "+100"),
            Contact::new("B", "+200"),
            Contact::emergency("E", "112"),
        ])
        .unwrap()
    }

    #[test]
    fn first_target_is_first_contact() {
        let mut run = EscalationRun::begin(EscalationPolicy::default(), abe(), 0);
        let (c, ch) = run.next_attempt(0).unwrap().unwrap();
        assert_eq!((c.id.as_str(), ch), ("A", Channel::Call));
    }

    #[test]
    fn empty_list_is_exhausted_immediately() {
        let mut run = EscalationRun::begin(EscalationPolicy::default(), ContactList::default(), 0);
        assert!(run.exhausted());
        assert!(run.next_attempt(0).unwrap().is_none());
    }

    #[test]
    fn emergency_only_list() {
        let list = ContactList::new(vec![Contact::emergency("E", "112")]).unwrap();
        let mut run = EscalationRun::begin(EscalationPolicy::default(), list, 0);
        assert_eq!(run.next_attempt(0).unwrap().unwrap().0.id, "E");
    }

    #[test]
    fn emergency_moved_last() {
        let list = ContactList::new(vec![
            Contact::emergency("E", "112"),
            Contact::new("A", "+1"),
            Contact::new("B", "+2"),
        ])
        .unwrap();
        let ids: Vec<_> = list.as_slice().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["A", "B", "E"]);
    }

    #[test]
    fn invalid_lists_rejected() {
        assert_eq!(
            ContactList::new(vec![Contact::new("A", " ")]),
            Err(ContactError::EmptyNumber("A".into()))
        );
        assert_eq!(
            ContactList::new(vec![Contact::emergency("E", "1"), Contact::emergency("F", "2")]),
            Err(ContactError::MultipleEmergency)
        );
        assert_eq!(
            ContactList::new(vec![Contact::new("A", "1"), Contact::new("A", "2")]),
            Err(ContactError::DuplicateId("A".into()))
        );
        let from_json: Result<ContactList, _> =
            serde_json::from_str(r#"[{"id":"A","number":""}]"#);
        assert!(from_json.is_err());
    }

    #[test]
    fn timeout_advances_to_next_contact() {
        let two = ContactList::new(vec![Contact::new("A", "1"), Contact::new("B", "2")]).unwrap();
        let mut run = EscalationRun::begin(EscalationPolicy::default(), two, 0);
        run.next_attempt(0).unwrap();
        // exactly 30 s is not yet exceeded
        assert_eq!(run.next_attempt(30_000).unwrap().unwrap().0.id, "A");
        let (c, ch) = run.next_attempt(31_000).unwrap().unwrap();
        assert_eq!((c.id.as_str(), ch), ("B", Channel::Call));
        assert_eq!(
            run.attempts(),
            &[AttemptRecord {
                t_ms: 31_000,
                contact_id: "A".into(),
                channel: Channel::Call,
                outcome: AttemptOutcome::Timeout,
            }]
        );
    }

    #[test]
    fn all_failed_rounds_exhaust() {
        let mut run = EscalationRun::begin(EscalationPolicy::default(), abe(), 0);
        let mut order = Vec::new();
        let mut t = 0;
        while let Some((c, _)) = run.next_attempt(t).unwrap() {
            let id = c.id.clone();
            order.push(id.clone());
            run.record_outcome(&id, AttemptOutcome::Failed, t).unwrap();
            t += 1000;
        }
        assert_eq!(order, ["A", "B", "E", "A", "B", "E", "A", "B", "E"]);
        assert_eq!(run.attempts().len(), 9);
        assert!(run.exhausted());
    }

    #[test]
    fn delivered_advances_but_does_not_stop() {
        let mut run = EscalationRun::begin(EscalationPolicy::default(), abe(), 0);
        run.next_attempt(0).unwrap();
        run.record_outcome("A", AttemptOutcome::Delivered, 1000).unwrap();
        assert_eq!(run.next_attempt(1000).unwrap().unwrap().0.id, "B");
        run.cancel(2000);
        assert_eq!(run.next_attempt(3000), Err(EscalationError::Cancelled));
        assert_eq!(run.attempts().len(), 1);
    }

    #[test]
    fn outcome_errors() {
        let mut run = EscalationRun::begin(EscalationPolicy::default(), abe(), 0);
        assert_eq!(
            run.record_outcome("A", AttemptOutcome::Failed, 0),
            Err(EscalationError::NoAttemptInFlight)
        );
        run.next_attempt(0).unwrap();
        assert_eq!(
            run.record_outcome("B", AttemptOutcome::Failed, 0),
            Err(EscalationError::UnknownContact("B".into()))
        );
        run.record_outcome("A", AttemptOutcome::Failed, 0).unwrap();
        assert_eq!(run.attempts().len(), 1);
    }

    #[test]
    fn cancel_is_idempotent_and_freezes_log() {
        let mut run = EscalationRun::begin(EscalationPolicy::default(), abe(), 0);
        run.cancel(0);
        run.cancel(5);
        assert!(run.is_cancelled());
        assert!(run.attempts().is_empty());

        let mut run = EscalationRun::begin(EscalationPolicy::default(), abe(), 0);
        run.next_attempt(0).unwrap();
        run.record_outcome("A", AttemptOutcome::Failed, 10).unwrap();
        run.next_attempt(10).unwrap();
        run.cancel(20);
        let frozen = run.attempts().to_vec();
        assert!(run.next_attempt(100_000).is_err());
        assert!(run.record_outcome("B", AttemptOutcome::Failed, 100_000).is_err());
        assert_eq!(run.attempts(), frozen.as_slice());
    }

    #[test]
    fn both_preference_adds_message_after_failed_call() {
        let list = ContactList::new(vec![
            Contact::new("A", "1").with_preference(ChannelPreference::Both),
            Contact::new("B", "2").with_preference(ChannelPreference::Message),
        ])
        .unwrap();
        let policy = EscalationPolicy {
            per_contact_timeout_s: 30,
            max_rounds: 1,
        };
        let mut run = EscalationRun::begin(policy, list, 0);
        let mut seen = Vec::new();
        while let Some((c, ch)) = run.next_attempt(0).unwrap() {
            let id = c.id.clone();
            seen.push((id.clone(), ch));
            run.record_outcome(&id, AttemptOutcome::Failed, 0).unwrap();
        }
        assert_eq!(
            seen,
            [
                ("A".to_string(), Channel::Call),
                ("A".to_string(), Channel::Message),
                ("B".to_string(), Channel::Message),
            ]
        );
    }

    #[test]
    fn delivered_call_skips_follow_up_message() {
        let list =
            ContactList::new(vec![Contact::new("A", "1").with_preference(ChannelPreference::Both)])
                .unwrap();
        let policy = EscalationPolicy {
            per_contact_timeout_s: 30,
            max_rounds: 1,
        };
        let mut run = EscalationRun::begin(policy, list, 0);
        run.next_attempt(0).unwrap();
        run.record_outcome("A", AttemptOutcome::Delivered, 0).unwrap();
        assert!(run.next_attempt(0).unwrap().is_none());
    }
}
