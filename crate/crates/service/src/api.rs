//! HTTP API.
//!
//! | method | path                     | body / query                         |
//! |--------|--------------------------|--------------------------------------|
//! | POST   | `/sessions`              | `{config?, contacts?, tick_period_s?, wall_clock?}` |
//! | GET    | `/sessions`              |                                      |
//! | POST   | `/sessions/{id}/samples` | `{"records": [...]}` or trace CSV    |
//! | POST   | `/sessions/{id}/ack`     |                                      |
//! | GET    | `/sessions/{id}/events`  | `?offset=N&follow=true\|false`       |
//! | GET    | `/sessions/{id}/state`   |                                      |
//!
//! The event feed is server-sent events, one JSON line per `data:` field
//! with the log index as event id, followed by a live tail. With
//! `follow=false` the log is returned as JSON Lines and the response ends.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::path::Path;
use std::sync::{Arc, RwLock, Weak};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use comaguard_core::trace::parse_trace;
use comaguard_core::{ContactList, DetectionConfig, TraceRecord};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::gateway::Gateway;
use crate::session::{RecoverError, Session, SessionMeta, WallClock};

pub struct Registry {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    config: ServiceConfig,
    gateway: Gateway,
    shutdown: watch::Sender<bool>,
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub config: Option<Value>,
    #[serde(default)]
    pub contacts: Option<Value>,
    #[serde(default)]
    pub tick_period_s: Option<u64>,
    #[serde(default)]
    pub wall_clock: Option<WallClock>,
}

impl Registry {
    /// Opens the registry and recovers every persisted session.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, RecoverError> {
        let gateway = config.gateway();
        let (shutdown, _) = watch::channel(false);
        let registry = Arc::new(Self {
            sessions: RwLock::new(HashMap::new()),
            config,
            gateway,
            shutdown,
        });
        if let Some(root) = registry.config.options.data_dir.clone() {
            std::fs::create_dir_all(&root).map_err(|source| RecoverError::Io {
                path: root.clone(),
                source,
            })?;
            registry.recover_all(&root)?;
        }
        Ok(registry)
    }

    fn recover_all(self: &Arc<Self>, root: &Path) -> Result<(), RecoverError> {
        let entries = std::fs::read_dir(root).map_err(|source| RecoverError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        for entry in entries.flatten() {
            let dir = entry.path();
            if !dir.join("session.json").is_file() {
                continue;
            }
            let session = Arc::new(Session::recover(&dir)?);
            tracing::info!(id = session.id(), events = session.len(), "recovered session");
            self.insert(session);
        }
        Ok(())
    }

    fn insert(self: &Arc<Self>, session: Arc<Session>) {
        if let Some(clock) = session.meta().wall_clock {
            self.spawn_ticker(&session, clock);
        }
        self.sessions
            .write()
            .expect("registry lock")
            .insert(session.id().to_string(), session);
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.sessions.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create(self: &Arc<Self>, req: CreateSession) -> Result<Arc<Session>, ServiceError> {
        let defaults = &self.config.settings;
        let mut config_value = serde_json::to_value(&defaults.detection).expect("config serializes");
        if let Some(patch) = req.config {
            if !patch.is_object() {
                return Err(ServiceError::field("config", "must be an object"));
            }
            merge(&mut config_value, patch);
        }
        let config: DetectionConfig =
            serde_json::from_value(config_value).map_err(|e| ServiceError::field("config", e))?;
        config
            .validate()
            .map_err(|e| ServiceError::field(e.field, e.reason))?;
        let contacts = match req.contacts {
            Some(v) => serde_json::from_value::<ContactList>(v)
                .map_err(|e| ServiceError::field("contacts", e))?,
            None => defaults.contacts.clone(),
        };
        let tick_period_s = req.tick_period_s.unwrap_or(defaults.tick_period_s);
        if tick_period_s == 0 {
            return Err(ServiceError::field("tick_period_s", "must be > 0"));
        }
        if let Some(c) = req.wall_clock {
            if !(c.speed.is_finite() && c.speed > 0.0) {
                return Err(ServiceError::field("wall_clock.speed", "must be finite and > 0"));
            }
        }
        let meta = SessionMeta {
            id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            config,
            contacts,
            tick_period_s,
            wall_clock: req.wall_clock,
        };
        let session = Arc::new(Session::create(meta, self.config.options.data_dir.as_deref())?);
        self.insert(session.clone());
        Ok(session)
    }

    /// Ends live event feeds and wall-clock tickers.
    pub fn shutdown(&self) {
        self.shutdown.send_replace(true);
    }

    fn spawn_ticker(self: &Arc<Self>, session: &Arc<Session>, clock: WallClock) {
        let weak: Weak<Session> = Arc::downgrade(session);
        let registry = Arc::downgrade(self);
        let mut stop = self.shutdown.subscribe();
        let tick_ms = session.meta().tick_period_s * 1000;
        let period = Duration::from_secs_f64((tick_ms as f64 / clock.speed / 1000.0).max(0.001));
        tokio::spawn(async move {
            // The logical clock starts with the first input.
            let mut anchor: Option<(Instant, u64)> = None;
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    _ = interval.tick() => {}
                    _ = stop.changed() => return,
                }
                let (Some(session), Some(registry)) = (weak.upgrade(), registry.upgrade()) else {
                    return;
                };
                let (start, origin) = match anchor {
                    Some(a) => a,
                    None => {
                        if let Some(now) = session.now_ms().await {
                            anchor = Some((Instant::now(), now));
                        }
                        continue;
                    }
                };
                let elapsed = (start.elapsed().as_secs_f64() * 1000.0 * clock.speed) as u64;
                let target = (origin + elapsed) / tick_ms * tick_ms;
                if let Err(e) = session.advance_to(target, registry.gateway()).await {
                    tracing::error!(id = session.id(), error = %e, "wall-clock tick failed");
                }
            }
        });
    }
}

type Shared = State<Arc<Registry>>;

async fn create_session(State(reg): Shared, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::field("body", e))?
    };
    let session = reg.create(req)?;
    let body = json!({ "id": session.id(), "created_at": session.meta().created_at });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list_sessions(State(reg): Shared) -> Json<Value> {
    Json(json!({ "sessions": reg.ids() }))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RecordsBody {
    Wrapped { records: Vec<TraceRecord> },
    Bare(Vec<TraceRecord>),
}

fn parse_records(headers: &HeaderMap, body: &[u8]) -> Result<Vec<TraceRecord>, ServiceError> {
    let is_csv = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv"));
    let records = if is_csv {
        parse_trace(body).map_err(|e| ServiceError::BadRequest(e.to_string()))?
    } else {
        match serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))? {
            RecordsBody::Wrapped { records } | RecordsBody::Bare(records) => records,
        }
    };
    Ok(records)
}

async fn ingest(
    State(reg): Shared,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ServiceError> {
    let session = reg.get(&id)?;
    let records = parse_records(&headers, &body)?;
    let report = session.ingest(&records, reg.gateway()).await?;
    Ok(Json(json!(report)))
}

async fn acknowledge(State(reg): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ServiceError> {
    let session = reg.get(&id)?;
    let report = session.acknowledge(reg.gateway()).await?;
    Ok(Json(json!(report)))
}

async fn state(State(reg): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ServiceError> {
    Ok(Json(reg.get(&id)?.state_view().await))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    offset: Option<usize>,
    follow: Option<bool>,
}

struct Feed {
    session: Arc<Session>,
    changes: watch::Receiver<usize>,
    stop: watch::Receiver<bool>,
    next: usize,
    buffered: VecDeque<(usize, String)>,
}

impl Feed {
    async fn next_line(&mut self) -> Option<(usize, String)> {
        loop {
            if let Some(item) = self.buffered.pop_front() {
                return Some(item);
            }
            if *self.stop.borrow_and_update() {
                return None;
            }
            self.changes.borrow_and_update();
            let lines = self.session.lines_from(self.next);
            if lines.is_empty() {
                tokio::select! {
                    r = self.changes.changed() => r.ok()?,
                    _ = self.stop.changed() => return None,
                }
                continue;
            }
            for line in lines {
                self.buffered.push_back((self.next, line));
                self.next += 1;
            }
        }
    }
}

async fn events(
    State(reg): Shared,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Response, ServiceError> {
    let session = reg.get(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok())
        .map(|last| last + 1);
    let offset = q.offset.or(resume).unwrap_or(0);

    if q.follow == Some(false) {
        let mut body = String::new();
        for line in session.lines_from(offset) {
            body.push_str(&line);
            body.push('\n');
        }
        return Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response());
    }

    let feed = Feed {
        changes: session.subscribe(),
        session,
        stop: reg.shutdown.subscribe(),
        next: offset,
        buffered: VecDeque::new(),
    };
    let stream = futures::stream::unfold(feed, |mut feed| async move {
        let (index, line) = feed.next_line().await?;
        let event = Event::default().id(index.to_string()).data(line);
        Some((Ok::<_, Infallible>(event), feed))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/samples", post(ingest))
        .route("/sessions/{id}/ack", post(acknowledge))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/state", get(state))
        .with_state(registry)
}

/// Serves until `signal` resolves, then ends live feeds and drains
/// in-flight requests. Every commit writes whole lines, so logs on disk
/// stay valid JSON Lines whenever the process stops.
pub async fn serve(
    listener: TcpListener,
    registry: Arc<Registry>,
    signal: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(registry.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            signal.await;
            registry.shutdown();
        })
        .await
}
