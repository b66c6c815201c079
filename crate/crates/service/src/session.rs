//! One live session: a detector on its own logical timeline, an
//! append-only event log, and an input journal for restart recovery.
//!
//! On disk a session is a directory holding
//!
//! - `session.json`: immutable settings,
//! - `inputs.jsonl`: every input applied to the detector, ticks and gateway
//!   answers included, in order,
//! - `events.jsonl`: the event log, byte-identical to an offline replay.
//!
//! Each commit writes complete lines with a single `write_all`, journal
//! first. Recovery folds the journal back through a fresh detector.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use comaguard_core::driver::{Driver, Poll};
use comaguard_core::{
    ContactList, DetectionConfig, Detector, DetectorState, InputEvent, OutputEvent, TraceRecord,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{watch, Mutex};

use crate::error::ServiceError;
use crate::gateway::{Gateway, GatewayRequest};

const META_FILE: &str = "session.json";
const JOURNAL_FILE: &str = "inputs.jsonl";
const EVENTS_FILE: &str = "events.jsonl";

/// Advances the session clock from the wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    /// Logical milliseconds per wall millisecond.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub created_at: String,
    pub config: DetectionConfig,
    pub contacts: ContactList,
    pub tick_period_s: u64,
    #[serde(default)]
    pub wall_clock: Option<WallClock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    /// Records accepted, for ingestion.
    pub accepted: usize,
    /// Logical time at the end of the call.
    pub now_ms: Option<u64>,
    /// Events produced by the call.
    pub events: Vec<OutputEvent>,
}

pub struct Session {
    meta: SessionMeta,
    dir: Option<PathBuf>,
    driver: Mutex<Driver>,
    log: RwLock<Vec<String>>,
    len_tx: watch::Sender<usize>,
}

fn append(path: &Path, lines: &[String]) -> std::io::Result<()> {
    if lines.is_empty() {
        return Ok(());
    }
    let mut buf = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    let mut f = OpenOptions::new().append(true).create(true).open(path)?;
    f.write_all(buf.as_bytes())?;
    f.flush()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn state_name(state: &DetectorState) -> Value {
    serde_json::to_value(state.kind()).expect("state kinds serialize")
}

#[derive(Debug, thiserror::Error)]
pub enum RecoverError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl Session {
    fn build(meta: SessionMeta, dir: Option<PathBuf>) -> Result<Self, ServiceError> {
        let detector = Detector::new(meta.config.clone(), meta.contacts.clone())
            .map_err(|e| ServiceError::field(e.field, e.reason))?;
        let driver = Driver::new(detector, meta.tick_period_s * 1000);
        let (len_tx, _) = watch::channel(0);
        Ok(Self {
            meta,
            dir,
            driver: Mutex::new(driver),
            log: RwLock::new(Vec::new()),
            len_tx,
        })
    }

    /// Creates a session, persisted under `root/{id}` when `root` is given.
    pub fn create(meta: SessionMeta, root: Option<&Path>) -> Result<Self, ServiceError> {
        let dir = root.map(|r| r.join(&meta.id));
        let session = Self::build(meta, dir)?;
        if let Some(dir) = &session.dir {
            fs::create_dir_all(dir)?;
            File::create(dir.join(JOURNAL_FILE))?;
            File::create(dir.join(EVENTS_FILE))?;
            let meta = serde_json::to_vec_pretty(&session.meta).expect("meta serializes");
            write_atomic(&dir.join(META_FILE), &meta)?;
        }
        Ok(session)
    }

    /// Rebuilds a session from its directory. A torn trailing journal line
    /// is dropped; the event log is rewritten from the journal if it
    /// disagrees.
    pub fn recover(dir: &Path) -> Result<Self, RecoverError> {
        let io = |path: PathBuf| move |source| RecoverError::Io { path, source };
        let corrupt = |path: &Path, reason: String| RecoverError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let meta_path = dir.join(META_FILE);
        let meta: SessionMeta = serde_json::from_slice(
            &fs::read(&meta_path).map_err(io(meta_path.clone()))?,
        )
        .map_err(|e| corrupt(&meta_path, e.to_string()))?;
        let session = Self::build(meta, Some(dir.to_path_buf()))
            .map_err(|e| corrupt(&meta_path, e.to_string()))?;

        let journal_path = dir.join(JOURNAL_FILE);
        let text = fs::read_to_string(&journal_path).unwrap_or_default();
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut driver = session.driver.try_lock().expect("fresh session");
        let mut lines = Vec::new();
        for (n, line) in complete.lines().enumerate() {
            let input: InputEvent = serde_json::from_str(line)
                .map_err(|e| corrupt(&journal_path, format!("line {}: {e}", n + 1)))?;
            let events = driver
                .apply_journaled(input)
                .map_err(|e| corrupt(&journal_path, format!("line {}: {e}", n + 1)))?;
            lines.extend(events.iter().map(OutputEvent::to_json_line));
        }
        driver.mark_dispatched();
        drop(driver);
        if complete.len() != text.len() {
            write_atomic(&journal_path, complete.as_bytes()).map_err(io(journal_path.clone()))?;
        }

        let events_path = dir.join(EVENTS_FILE);
        let mut rebuilt = String::new();
        for l in &lines {
            rebuilt.push_str(l);
            rebuilt.push('\n');
        }
        if fs::read_to_string(&events_path).ok().as_deref() != Some(rebuilt.as_str()) {
            tracing::warn!(path = %events_path.display(), "rewriting event log from journal");
            write_atomic(&events_path, rebuilt.as_bytes()).map_err(io(events_path.clone()))?;
        }
        let n = lines.len();
        *session.log.write().expect("log lock") = lines;
        session.len_tx.send_replace(n);
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn meta(&self) -> &SessionMeta {
        &self.meta
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Event log lines from `offset` on.
    pub fn lines_from(&self, offset: usize) -> Vec<String> {
        let log = self.log.read().expect("log lock");
        log.get(offset..).map(<[String]>::to_vec).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.log.read().expect("log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Watches the log length.
    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.len_tx.subscribe()
    }

    fn commit(&self, inputs: &mut Vec<InputEvent>, events: &mut Vec<OutputEvent>) -> Result<(), ServiceError> {
        let input_lines: Vec<String> = inputs
            .drain(..)
            .map(|i| serde_json::to_string(&i).expect("inputs serialize"))
            .collect();
        let event_lines: Vec<String> = events.drain(..).map(|e| e.to_json_line()).collect();
        if let Some(dir) = &self.dir {
            append(&dir.join(JOURNAL_FILE), &input_lines)?;
            append(&dir.join(EVENTS_FILE), &event_lines)?;
        }
        if !event_lines.is_empty() {
            let mut log = self.log.write().expect("log lock");
            log.extend(event_lines);
            self.len_tx.send_replace(log.len());
        }
        Ok(())
    }

    /// Steps everything queued on the driver, dispatching contact attempts
    /// through `gateway` as they start. Produced events are committed
    /// before each gateway call so subscribers see them without waiting.
    async fn pump(&self, driver: &mut Driver, gateway: &Gateway) -> Result<Vec<OutputEvent>, ServiceError> {
        let timeout_ms = self.meta.config.escalation.per_contact_timeout_s * 1000;
        let mut produced = Vec::new();
        let mut inputs = Vec::new();
        let mut events = Vec::new();
        loop {
            match driver.poll()? {
                Poll::Idle => break,
                Poll::Stepped { input, events: e } => {
                    inputs.push(input);
                    produced.extend(e.iter().cloned());
                    events.extend(e);
                }
                Poll::Dispatch(req) => {
                    self.commit(&mut inputs, &mut events)?;
                    let request = GatewayRequest::for_attempt(self.id(), &req);
                    if let Some(outcome) = gateway.notify(&request, timeout_ms).await {
                        let (input, e) = driver.resolve(&req, outcome)?;
                        inputs.push(input);
                        produced.extend(e.iter().cloned());
                        events.extend(e);
                    }
                }
            }
        }
        self.commit(&mut inputs, &mut events)?;
        Ok(produced)
    }

    /// Applies a batch of records, all or nothing.
    pub async fn ingest(&self, records: &[TraceRecord], gateway: &Gateway) -> Result<StepReport, ServiceError> {
        let mut driver = self.driver.lock().await;
        driver
            .check_records(records)
            .map_err(|(index, source)| ServiceError::Rejected { index, source })?;
        for r in records {
            driver.push_record(r)?;
        }
        let events = self.pump(&mut driver, gateway).await?;
        Ok(StepReport {
            accepted: records.len(),
            now_ms: driver.now_ms(),
            events,
        })
    }

    /// Acknowledges at the session's current logical time.
    pub async fn acknowledge(&self, gateway: &Gateway) -> Result<StepReport, ServiceError> {
        let mut driver = self.driver.lock().await;
        driver.push_ack();
        let events = self.pump(&mut driver, gateway).await?;
        Ok(StepReport {
            accepted: 0,
            now_ms: driver.now_ms(),
            events,
        })
    }

    /// Moves the clock forward to `t_ms` with ticks. Earlier times are ignored.
    pub async fn advance_to(&self, t_ms: u64, gateway: &Gateway) -> Result<StepReport, ServiceError> {
        let mut driver = self.driver.lock().await;
        if driver.now_ms().is_some_and(|now| t_ms <= now) {
            return Ok(StepReport {
                accepted: 0,
                now_ms: driver.now_ms(),
                events: Vec::new(),
            });
        }
        driver.push_ticks_until(t_ms)?;
        let events = self.pump(&mut driver, gateway).await?;
        Ok(StepReport {
            accepted: 0,
            now_ms: driver.now_ms(),
            events,
        })
    }

    pub async fn now_ms(&self) -> Option<u64> {
        self.driver.lock().await.now_ms()
    }

    /// Current detector state as JSON.
    pub async fn state_view(&self) -> Value {
        let driver = self.driver.lock().await;
        let det = driver.detector();
        let cfg = det.config();
        let mut view = json!({
            "id": self.id(),
            "state": state_name(det.state()),
            "now_ms": driver.now_ms(),
            "last_sample_ms": det.last_sample_ms(),
            "events": self.len(),
            "frame": det.last_frame(),
        });
        match det.state() {
            DetectorState::Immobile { entered_at_ms } => {
                view["immobile_since_ms"] = json!(entered_at_ms);
            }
            DetectorState::Vigil { baselines } => view["baselines"] = json!(baselines),
            DetectorState::LocalAlarm {
                raised_at_ms,
                reasons,
            } => {
                view["alarm"] = json!({
                    "raised_at_ms": raised_at_ms,
                    "reasons": reasons,
                    "ack_deadline_ms": raised_at_ms + cfg.ack_window_s * 1000,
                });
            }
            _ => {}
        }
        if let Some(run) = det.escalation() {
            view["escalation"] = json!({
                "started_at_ms": run.started_at_ms(),
                "round": run.round(),
                "attempts": run.attempts(),
                "in_flight": det.in_flight_attempt().map(|a| json!({
                    "contact_id": a.contact.id,
                    "channel": a.channel,
                    "started_at_ms": a.started_at_ms,
                })),
            });
        }
        view
    }
}
