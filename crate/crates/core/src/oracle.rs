//! Independent recomputation of an event log from a trace.
//!
//! Nothing here shares code with the streaming path: features are
//! recomputed from scratch at every input by scanning the full trace prefix
//! (two-pass standard deviation, closed-form least squares, sorted median),
//! and the state machine and contact policy are modelled separately. The
//! gateway's answers are external facts, so they are read back from the log
//! under test: when the model starts an attempt and the log's next attempt
//! for that contact and channel was answered (`delivered` or `failed`), the
//! answer is applied at the moment of dispatch. Anything else is left to the
//! model's own timeout.

use std::fmt;

use chrono::Timelike;

use crate::config::DetectionConfig;
use crate::escalation::{AttemptOutcome, Channel, ChannelPreference, ContactList};
use crate::event::{AlarmEvidence, EventKind, OutputEvent, StateKind, StopCause};
use crate::features::{DangerReason, DangerSet, FeatureFrame};
use crate::trace::TraceRecord;

/// Absolute tolerance for floating-point fields.
pub const VALUE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    /// The log breaks causal order: an attempt outside an escalation, or an
    /// escalation without a preceding alarm.
    Ordering,
    /// Same event, different timestamp.
    Timing,
    /// Different event type or discrete field.
    Mismatch,
    /// A numeric field differs beyond [`VALUE_TOLERANCE`].
    Value,
    Missing,
    Unexpected,
    /// The trace itself could not be processed.
    InvalidInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub kind: DivergenceKind,
    /// Position in the event log.
    pub index: usize,
    pub expected: Option<OutputEvent>,
    pub actual: Option<OutputEvent>,
    pub detail: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: {:?}: {}", self.index, self.kind, self.detail)?;
        if let Some(e) = &self.expected {
            write!(f, "; expected {}", e.to_json_line())?;
        }
        if let Some(a) = &self.actual {
            write!(f, "; found {}", a.to_json_line())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(Vec<Divergence>),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn divergences(&self) -> &[Divergence] {
        match self {
            Verdict::Pass => &[],
            Verdict::Fail(d) => d,
        }
    }
}

// ---------------------------------------------------------------------------
// naive features

fn ms(seconds: u64) -> u64 {
    seconds * 1000
}

fn two_pass_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Centered normal-equation slope, x in minutes from the first point.
fn closed_form_slope(pts: &[(u64, f64)]) -> f64 {
    let t0 = pts[0].0;
    let xs: Vec<f64> = pts.iter().map(|p| (p.0 - t0) as f64 / 60_000.0).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(pts).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn sorted_median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite readings"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn magnitude(r: &TraceRecord) -> f64 {
    (r.ax_g.powi(2) + r.ay_g.powi(2) + r.az_g.powi(2)).sqrt()
}

/// Latest value of `pick` with a timestamp in `[now - timeout, now]`.
fn latest_fresh(
    prefix: &[TraceRecord],
    now: u64,
    timeout_ms: u64,
    pick: fn(&TraceRecord) -> Option<f64>,
) -> Option<f64> {
    prefix
        .iter()
        .rev()
        .skip_while(|r| r.t_ms > now)
        .take_while(|r| r.t_ms + timeout_ms >= now)
        .find_map(pick)
}

/// Frame at the last record of `prefix`.
fn frame_at(prefix: &[TraceRecord], cfg: &DetectionConfig) -> FeatureFrame {
    let t = prefix.last().expect("non-empty prefix").t_ms;
    let activity = ms(cfg.activity_window_s);
    let trend = ms(cfg.hr_trend_window_s);
    let timeout = ms(cfg.hr_absence_timeout_s);

    let mags: Vec<f64> = prefix
        .iter()
        .rev()
        .take_while(|r| r.t_ms + activity > t)
        .map(magnitude)
        .collect();
    let energy = if mags.len() < 2 { 0.0 } else { two_pass_std(&mags) };

    let mut hr_pts: Vec<(u64, f64)> = prefix
        .iter()
        .rev()
        .take_while(|r| r.t_ms + trend > t)
        .filter_map(|r| r.hr_bpm.map(|h| (r.t_ms, h)))
        .collect();
    hr_pts.reverse();
    let slope = match (hr_pts.first(), hr_pts.last()) {
        (Some(a), Some(b))
            if hr_pts.len() >= cfg.min_slope_samples
                && b.0 > a.0
                && 2 * (b.0 - a.0) >= trend =>
        {
            Some(closed_form_slope(&hr_pts))
        }
        _ => None,
    };

    let hr_now = latest_fresh(prefix, t, timeout, |r| r.hr_bpm);
    FeatureFrame {
        t_ms: t,
        motion_energy_g: energy,
        moving: energy > cfg.motion_threshold_g,
        hr_now,
        hr_slope_bpm_per_min: slope,
        worn: hr_now.is_some(),
        rh_now: latest_fresh(prefix, t, timeout, |r| r.skin_rh),
    }
}

/// One frame per record, each recomputed from the whole prefix.
pub fn naive_frames(records: &[TraceRecord], config: &DetectionConfig) -> Vec<FeatureFrame> {
    (1..=records.len())
        .map(|n| frame_at(&records[..n], config))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NaiveBaselines {
    hr: f64,
    rh: Option<f64>,
}

fn baselines_at(
    prefix: &[TraceRecord],
    since: u64,
    now: u64,
    cfg: &DetectionConfig,
) -> Option<NaiveBaselines> {
    let from = since.max(now.saturating_sub(ms(cfg.baseline_window_s)));
    let window = || {
        prefix
            .iter()
            .rev()
            .skip_while(move |r| r.t_ms > now)
            .take_while(move |r| r.t_ms >= from)
    };
    let hr: Vec<f64> = window().filter_map(|r| r.hr_bpm).collect();
    let rh: Vec<f64> = window().filter_map(|r| r.skin_rh).collect();
    if hr.len() < cfg.min_baseline_samples {
        return None;
    }
    Some(NaiveBaselines {
        hr: sorted_median(hr),
        rh: (rh.len() >= cfg.min_baseline_samples).then(|| sorted_median(rh)),
    })
}

fn danger(frame: &FeatureFrame, base: &NaiveBaselines, cfg: &DetectionConfig) -> DangerSet {
    let mut out = DangerSet::new();
    let gate = if cfg.tachycardia_abs_bpm >= cfg.tachycardia_rel_factor * base.hr {
        cfg.tachycardia_abs_bpm
    } else {
        cfg.tachycardia_rel_factor * base.hr
    };
    if let (Some(slope), Some(hr)) = (frame.hr_slope_bpm_per_min, frame.hr_now) {
        if slope >= cfg.hr_slope_min_bpm_per_min && hr >= gate {
            out.insert(DangerReason::TachycardiaTrend);
        }
    }
    if let (Some(rh), Some(rb)) = (frame.rh_now, base.rh) {
        if rh - rb >= cfg.moisture_rise_pct {
            out.insert(DangerReason::MoistureRise);
        }
    }
    out
}

fn in_sleep_window(cfg: &DetectionConfig, t_ms: u64) -> bool {
    const DAY: u64 = 86_400_000;
    let origin = cfg.clock_origin.num_seconds_from_midnight() as u64 * 1000
        + cfg.clock_origin.nanosecond() as u64 / 1_000_000;
    let tod = (origin + t_ms) % DAY;
    let of = |t: chrono::NaiveTime| {
        t.num_seconds_from_midnight() as u64 * 1000 + t.nanosecond() as u64 / 1_000_000
    };
    let (start, end) = (of(cfg.sleep_window.start), of(cfg.sleep_window.end));
    if start <= end {
        (start..end).contains(&tod)
    } else {
        tod >= start || tod < end
    }
}

// ---------------------------------------------------------------------------
// naive state machine

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Idle,
    Active,
    Immobile(u64),
    Vigil(NaiveBaselines),
    LocalAlarm(u64),
    Escalating,
}

impl Phase {
    fn kind(&self) -> StateKind {
        match self {
            Phase::Idle => StateKind::Idle,
            Phase::Active => StateKind::Active,
            Phase::Immobile(_) => StateKind::Immobile,
            Phase::Vigil(_) => StateKind::Vigil,
            Phase::LocalAlarm(_) => StateKind::LocalAlarm,
            Phase::Escalating => StateKind::Escalating,
        }
    }
}

/// Flat list of (contact index, channel) slots for one escalation.
struct Plan {
    round: u32,
    index: usize,
    message_next: bool,
    current: Option<(usize, Channel, u64)>,
}

enum Step {
    Record(usize),
    Tick(u64),
    Ack(u64),
}

struct Model<'a> {
    cfg: &'a DetectionConfig,
    contacts: &'a ContactList,
    records: &'a [TraceRecord],
    log_attempts: Vec<(String, Channel, AttemptOutcome)>,
    seen: usize,
    phase: Phase,
    last_motion: u64,
    cooldown_until: Option<u64>,
    last_reminder: Option<u64>,
    plan: Option<Plan>,
    attempts_emitted: usize,
    awaiting_reply: bool,
    out: Vec<OutputEvent>,
}

impl<'a> Model<'a> {
    fn prefix(&self) -> &'a [TraceRecord] {
        &self.records[..self.seen]
    }

    fn worn(&self, t: u64) -> bool {
        latest_fresh(self.prefix(), t, ms(self.cfg.hr_absence_timeout_s), |r| r.hr_bpm).is_some()
    }

    fn emit(&mut self, t: u64, kind: EventKind) {
        self.out.push(OutputEvent::new(t, kind));
    }

    fn go(&mut self, to: Phase, t: u64) {
        let from = self.phase.kind();
        self.emit(t, EventKind::StateChanged { from, to: to.kind() });
        if to == Phase::Active {
            self.last_motion = t;
        }
        self.phase = to;
    }

    fn attempt_done(&mut self, t: u64, outcome: AttemptOutcome) {
        let plan = self.plan.as_mut().expect("plan");
        let (idx, channel, _) = plan.current.take().expect("attempt in flight");
        let contact = &self.contacts.as_slice()[idx];
        if contact.channel_preference == ChannelPreference::Both
            && channel == Channel::Call
            && outcome != AttemptOutcome::Delivered
        {
            plan.message_next = true;
        } else if idx + 1 == self.contacts.len() {
            plan.index = 0;
            plan.round += 1;
        } else {
            plan.index = idx + 1;
        }
        let id = contact.id.clone();
        self.attempts_emitted += 1;
        self.emit(
            t,
            EventKind::ContactAttempt {
                contact_id: id,
                channel,
                outcome,
            },
        );
    }

    fn pump(&mut self, t: u64) {
        let timeout = ms(self.cfg.escalation.per_contact_timeout_s);
        let Some(plan) = self.plan.as_ref() else { return };
        if let Some((_, _, started)) = plan.current {
            if t > started + timeout {
                self.attempt_done(t, AttemptOutcome::Timeout);
            }
        }
        let plan = self.plan.as_mut().expect("plan");
        if plan.current.is_some() {
            return;
        }
        if self.contacts.is_empty() || plan.round >= self.cfg.escalation.max_rounds {
            self.plan = None;
            self.emit(t, EventKind::EscalationStopped { cause: StopCause::Exhausted });
            self.go(Phase::Idle, t);
            return;
        }
        let contact = &self.contacts.as_slice()[plan.index];
        let channel = if std::mem::take(&mut plan.message_next)
            || contact.channel_preference == ChannelPreference::Message
        {
            Channel::Message
        } else {
            Channel::Call
        };
        plan.current = Some((plan.index, channel, t));
        self.awaiting_reply = true;
    }

    fn advance(&mut self, t: u64, frame: Option<FeatureFrame>) {
        let cfg = self.cfg;
        let moving = frame.is_some_and(|f| f.moving);
        match self.phase {
            Phase::Idle if moving => self.go(Phase::Active, t),
            Phase::Idle => {}
            Phase::Active if moving => self.last_motion = t,
            Phase::Active => {
                if t >= self.last_motion + ms(cfg.immobility_duration_s) {
                    self.go(Phase::Immobile(t), t);
                }
            }
            Phase::Immobile(_) | Phase::Vigil(_) if moving => self.go(Phase::Active, t),
            Phase::Immobile(_) | Phase::Vigil(_) if !self.worn(t) => self.go(Phase::Idle, t),
            Phase::Immobile(entered) => {
                if t >= entered + ms(cfg.baseline_window_s) {
                    if let Some(b) = baselines_at(self.prefix(), entered, t, cfg) {
                        self.go(Phase::Vigil(b), t);
                    }
                }
            }
            Phase::Vigil(base) => {
                let Some(frame) = frame else { return };
                if self.cooldown_until.is_some_and(|until| t < until) {
                    return;
                }
                let reasons = danger(&frame, &base, cfg);
                if reasons.is_empty() {
                    return;
                }
                let evidence = AlarmEvidence {
                    hr_now: frame.hr_now,
                    hr_slope_bpm_per_min: frame.hr_slope_bpm_per_min,
                    hr_baseline_bpm: Some(base.hr),
                    rh_now: frame.rh_now,
                    rh_baseline_pct: base.rh,
                };
                self.emit(t, EventKind::AlarmRaised { reasons, evidence });
                self.go(Phase::LocalAlarm(t), t);
            }
            Phase::LocalAlarm(raised) => {
                if t >= raised + ms(cfg.ack_window_s) {
                    self.emit(t, EventKind::EscalationStarted);
                    self.go(Phase::Escalating, t);
                    self.plan = Some(Plan {
                        round: 0,
                        index: 0,
                        message_next: false,
                        current: None,
                    });
                    self.pump(t);
                }
            }
            Phase::Escalating => self.pump(t),
        }
    }

    fn acknowledge(&mut self, t: u64) {
        match self.phase {
            Phase::LocalAlarm(_) => self.emit(t, EventKind::AlarmAcknowledged),
            Phase::Escalating => {
                self.plan = None;
                self.awaiting_reply = false;
                self.emit(t, EventKind::EscalationStopped { cause: StopCause::Acknowledged });
            }
            _ => return,
        }
        self.cooldown_until = Some(t + ms(self.cfg.alarm_cooldown_s));
        self.go(Phase::Active, t);
    }

    fn remind(&mut self, t: u64) {
        if self.phase != Phase::Idle || self.worn(t) || !in_sleep_window(self.cfg, t) {
            return;
        }
        if self
            .last_reminder
            .is_some_and(|last| t < last + ms(self.cfg.reminder_interval_s))
        {
            return;
        }
        self.last_reminder = Some(t);
        self.emit(t, EventKind::WearReminder);
    }

    /// Applies the logged gateway answer to a freshly started attempt.
    fn take_replies(&mut self, t: u64) {
        while std::mem::take(&mut self.awaiting_reply) {
            let Some((idx, channel, _)) = self.plan.as_ref().and_then(|p| p.current) else {
                return;
            };
            let id = &self.contacts.as_slice()[idx].id;
            let answered = match self.log_attempts.get(self.attempts_emitted) {
                Some((logged_id, logged_ch, outcome))
                    if logged_id == id
                        && *logged_ch == channel
                        && *outcome != AttemptOutcome::Timeout =>
                {
                    Some(*outcome)
                }
                _ => None,
            };
            if let Some(outcome) = answered {
                self.attempt_done(t, outcome);
                self.pump(t);
                self.remind(t);
            }
        }
    }

    fn run(&mut self, step: Step) {
        let t = match step {
            Step::Record(i) => {
                self.seen = i + 1;
                let t = self.records[i].t_ms;
                let frame = frame_at(self.prefix(), self.cfg);
                self.advance(t, Some(frame));
                t
            }
            Step::Tick(t) => {
                self.advance(t, None);
                t
            }
            Step::Ack(t) => {
                self.advance(t, None);
                self.acknowledge(t);
                t
            }
        };
        self.remind(t);
        self.take_replies(t);
    }
}

fn check_trace(records: &[TraceRecord]) -> Result<(), String> {
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| format!("record {i}: {e}"))?;
        if i > 0 && r.t_ms <= records[i - 1].t_ms {
            return Err(format!("record {i}: timestamp does not increase"));
        }
    }
    Ok(())
}

/// The log the oracle expects for `records`, given the gateway answers
/// recorded in `log`.
pub fn expected_events(
    records: &[TraceRecord],
    config: &DetectionConfig,
    contacts: &ContactList,
    tick_period_s: u64,
    log: &[OutputEvent],
) -> Result<Vec<OutputEvent>, String> {
    config.validate().map_err(|e| e.to_string())?;
    check_trace(records)?;
    if tick_period_s == 0 {
        return Err("tick period must be > 0".into());
    }
    let tick = ms(tick_period_s);
    let log_attempts = log
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::ContactAttempt {
                contact_id,
                channel,
                outcome,
            } => Some((contact_id.clone(), *channel, *outcome)),
            _ => None,
        })
        .collect();
    let mut model = Model {
        cfg: config,
        contacts,
        records,
        log_attempts,
        seen: 0,
        phase: Phase::Idle,
        last_motion: 0,
        cooldown_until: None,
        last_reminder: None,
        plan: None,
        attempts_emitted: 0,
        awaiting_reply: false,
        out: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            let prev = records[i - 1].t_ms;
            let mut k = prev / tick + 1;
            while k * tick < r.t_ms {
                model.run(Step::Tick(k * tick));
                k += 1;
            }
        }
        model.run(Step::Record(i));
        if r.is_ack() {
            model.run(Step::Ack(r.t_ms));
        }
    }
    Ok(model.out)
}

/// Causal structure every log must have, independent of the trace.
pub fn ordering_violations(log: &[OutputEvent]) -> Vec<Divergence> {
    let mut out = Vec::new();
    let mut pending_alarm = false;
    let mut escalating = false;
    for (index, e) in log.iter().enumerate() {
        let problem = match &e.kind {
            EventKind::AlarmRaised { .. } => {
                pending_alarm = true;
                None
            }
            EventKind::AlarmAcknowledged => {
                pending_alarm = false;
                None
            }
            EventKind::EscalationStarted if !pending_alarm => {
                Some("escalation started without a pending alarm")
            }
            EventKind::EscalationStarted => {
                pending_alarm = false;
                escalating = true;
                None
            }
            EventKind::ContactAttempt { .. } if !escalating => {
                Some("contact attempt outside an escalation")
            }
            EventKind::EscalationStopped { .. } if !escalating => {
                Some("escalation stopped without having started")
            }
            EventKind::EscalationStopped { .. } => {
                escalating = false;
                None
            }
            _ => None,
        };
        if let Some(detail) = problem {
            out.push(Divergence {
                kind: DivergenceKind::Ordering,
                index,
                expected: None,
                actual: Some(e.clone()),
                detail: detail.into(),
            });
        }
    }
    out
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= VALUE_TOLERANCE,
        _ => false,
    }
}

fn compare(expected: &OutputEvent, actual: &OutputEvent) -> Option<(DivergenceKind, String)> {
    use EventKind::AlarmRaised;
    if expected.kind.name() != actual.kind.name() {
        return Some((
            DivergenceKind::Mismatch,
            format!("expected {}, found {}", expected.kind.name(), actual.kind.name()),
        ));
    }
    match (&expected.kind, &actual.kind) {
        (
            AlarmRaised {
                reasons: r1,
                evidence: e1,
            },
            AlarmRaised {
                reasons: r2,
                evidence: e2,
            },
        ) => {
            if r1 != r2 {
                return Some((DivergenceKind::Mismatch, "alarm reasons differ".into()));
            }
            let fields = [
                ("hr_now", e1.hr_now, e2.hr_now),
                ("hr_slope_bpm_per_min", e1.hr_slope_bpm_per_min, e2.hr_slope_bpm_per_min),
                ("hr_baseline_bpm", e1.hr_baseline_bpm, e2.hr_baseline_bpm),
                ("rh_now", e1.rh_now, e2.rh_now),
                ("rh_baseline_pct", e1.rh_baseline_pct, e2.rh_baseline_pct),
            ];
            if let Some((name, ..)) = fields.iter().find(|(_, a, b)| !close(*a, *b)) {
                return Some((DivergenceKind::Value, format!("evidence field {name} differs")));
            }
        }
        (a, b) if a != b => {
            return Some((DivergenceKind::Mismatch, "event fields differ".into()));
        }
        _ => {}
    }
    if expected.t_ms != actual.t_ms {
        return Some((
            DivergenceKind::Timing,
            format!("expected t_ms {}, found {}", expected.t_ms, actual.t_ms),
        ));
    }
    None
}

/// Checks `log` against an independent recomputation from `records`.
pub fn verify_events(
    records: &[TraceRecord],
    config: &DetectionConfig,
    contacts: &ContactList,
    tick_period_s: u64,
    log: &[OutputEvent],
) -> Verdict {
    let ordering = ordering_violations(log);
    if !ordering.is_empty() {
        return Verdict::Fail(ordering);
    }
    let expected = match expected_events(records, config, contacts, tick_period_s, log) {
        Ok(e) => e,
        Err(detail) => {
            return Verdict::Fail(vec![Divergence {
                kind: DivergenceKind::InvalidInput,
                index: 0,
                expected: None,
                actual: None,
                detail,
            }])
        }
    };
    let mut out = Vec::new();
    for index in 0..expected.len().max(log.len()) {
        let (e, a) = (expected.get(index), log.get(index));
        let found = match (e, a) {
            (Some(e), Some(a)) => compare(e, a),
            (Some(_), None) => Some((DivergenceKind::Missing, "log ends early".into())),
            (None, Some(_)) => Some((DivergenceKind::Unexpected, "extra event".into())),
            (None, None) => None,
        };
        if let Some((kind, detail)) = found {
            out.push(Divergence {
                kind,
                index,
                expected: e.cloned(),
                actual: a.cloned(),
                detail,
            });
        }
    }
    if out.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(out)
    }
}
