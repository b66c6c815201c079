//! Feeds a detector along one logical timeline.
//!
//! The driver turns trace records into detector inputs, synthesizes ticks
//! at every multiple of the tick period strictly between consecutive
//! inputs, and surfaces each newly started contact attempt exactly once so
//! the caller can dispatch it. Offline replay and the live session service
//! both drive detectors through this type, which is what keeps their event
//! logs identical for the same records.
//!
//! Gateway responses are applied at the logical time the attempt was
//! dispatched, before any later input is stepped.

use std::collections::VecDeque;

use crate::detector::{AttemptRequest, Detector, DetectorError, InputEvent};
use crate::escalation::AttemptOutcome;
use crate::event::OutputEvent;
use crate::trace::TraceRecord;

#[derive(Debug, Clone, PartialEq)]
pub enum Poll {
    /// One input was applied.
    Stepped {
        input: InputEvent,
        events: Vec<OutputEvent>,
    },
    /// A new contact attempt started; resolve it or let it time out.
    Dispatch(AttemptRequest),
    /// Nothing queued.
    Idle,
}

#[derive(Debug, Clone)]
pub struct Driver {
    detector: Detector,
    tick_ms: u64,
    queue: VecDeque<InputEvent>,
    /// Latest timestamp accepted onto the timeline (queued or stepped).
    horizon_ms: Option<u64>,
    last_record_ms: Option<u64>,
    dispatched: Option<(u64, usize)>,
}

impl Driver {
    pub fn new(detector: Detector, tick_period_ms: u64) -> Self {
        assert!(tick_period_ms > 0, "tick period must be positive");
        let horizon_ms = detector.now_ms();
        let last_record_ms = detector.last_sample_ms();
        Self {
            detector,
            tick_ms: tick_period_ms,
            queue: VecDeque::new(),
            horizon_ms,
            last_record_ms,
            dispatched: None,
        }
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn tick_period_ms(&self) -> u64 {
        self.tick_ms
    }

    /// Current end of the logical timeline.
    pub fn now_ms(&self) -> Option<u64> {
        self.horizon_ms
    }

    /// Validates a batch of records against the timeline without queuing
    /// anything. Returns the index of the first bad record with its error.
    pub fn check_records(&self, records: &[TraceRecord]) -> Result<(), (usize, DetectorError)> {
        let mut horizon = self.horizon_ms;
        let mut last_record = self.last_record_ms;
        for (i, r) in records.iter().enumerate() {
            if let Some(h) = horizon {
                if r.t_ms < h {
                    return Err((i, DetectorError::NonMonotonicInput { last_ms: h, got_ms: r.t_ms }));
                }
            }
            if let Some(l) = last_record {
                if r.t_ms <= l {
                    return Err((i, DetectorError::NonMonotonicInput { last_ms: l, got_ms: r.t_ms }));
                }
            }
            r.sample()
                .validate()
                .map_err(|fault| (i, DetectorError::InvalidSample { t_ms: r.t_ms, fault }))?;
            horizon = Some(r.t_ms);
            last_record = Some(r.t_ms);
        }
        Ok(())
    }

    fn enqueue_ticks_before(&mut self, t_ms: u64) {
        let Some(h) = self.horizon_ms else { return };
        let mut tick = (h / self.tick_ms + 1) * self.tick_ms;
        while tick < t_ms {
            self.queue.push_back(InputEvent::Tick { t_ms: tick });
            tick += self.tick_ms;
        }
    }

    /// Queues a record as a sample, followed by an acknowledgement when the
    /// record carries one.
    pub fn push_record(&mut self, record: &TraceRecord) -> Result<(), DetectorError> {
        self.check_records(std::slice::from_ref(record))
            .map_err(|(_, e)| e)?;
        self.enqueue_ticks_before(record.t_ms);
        self.queue.push_back(InputEvent::Sample(record.sample()));
        if record.is_ack() {
            self.queue.push_back(InputEvent::Acknowledge { t_ms: record.t_ms });
        }
        self.horizon_ms = Some(record.t_ms);
        self.last_record_ms = Some(record.t_ms);
        Ok(())
    }

    /// Queues an acknowledgement at the current end of the timeline.
    pub fn push_ack(&mut self) -> u64 {
        let t = self.horizon_ms.unwrap_or(0);
        self.queue.push_back(InputEvent::Acknowledge { t_ms: t });
        self.horizon_ms = Some(t);
        t
    }

    /// Advances the timeline to `t_ms` with ticks, ending with one at `t_ms`.
    pub fn push_ticks_until(&mut self, t_ms: u64) -> Result<(), DetectorError> {
        if let Some(h) = self.horizon_ms {
            if t_ms < h {
                return Err(DetectorError::NonMonotonicInput { last_ms: h, got_ms: t_ms });
            }
            if t_ms == h {
                return Ok(());
            }
        }
        self.enqueue_ticks_before(t_ms);
        self.queue.push_back(InputEvent::Tick { t_ms });
        self.horizon_ms = Some(t_ms);
        Ok(())
    }

    /// Surfaces an undispatched attempt first, otherwise steps one queued input.
    pub fn poll(&mut self) -> Result<Poll, DetectorError> {
        if let Some(req) = self.detector.in_flight_attempt() {
            let key = (req.run_started_at_ms, req.seq);
            if self.dispatched != Some(key) {
                self.dispatched = Some(key);
                return Ok(Poll::Dispatch(req));
            }
        }
        let Some(input) = self.queue.pop_front() else {
            return Ok(Poll::Idle);
        };
        let events = self.detector.step(input.clone())?;
        Ok(Poll::Stepped { input, events })
    }

    /// Applies the gateway's answer to a dispatched attempt at the current
    /// logical time.
    pub fn resolve(
        &mut self,
        request: &AttemptRequest,
        outcome: AttemptOutcome,
    ) -> Result<(InputEvent, Vec<OutputEvent>), DetectorError> {
        let input = InputEvent::AttemptOutcome {
            t_ms: self.detector.now_ms().unwrap_or(request.started_at_ms),
            contact_id: request.contact.id.clone(),
            outcome,
        };
        let events = self.detector.step(input.clone())?;
        Ok((input, events))
    }

    /// Steps an input directly, bypassing the queue. Used to rebuild a
    /// detector from a journal of previously applied inputs.
    pub fn apply_journaled(&mut self, input: InputEvent) -> Result<Vec<OutputEvent>, DetectorError> {
        let t = input.t_ms();
        let is_sample = matches!(input, InputEvent::Sample(_));
        let events = self.detector.step(input)?;
        self.horizon_ms = Some(self.horizon_ms.map_or(t, |h| h.max(t)));
        if is_sample {
            self.last_record_ms = Some(t);
        }
        Ok(events)
    }

    /// Treats the current in-flight attempt as already dispatched.
    pub fn mark_dispatched(&mut self) {
        if let Some(req) = self.detector.in_flight_attempt() {
            self.dispatched = Some((req.run_started_at_ms, req.seq));
        }
    }
}
