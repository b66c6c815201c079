//! A scriptable stand-in for the notification gateway.
//!
//! `POST /notify` records the request and answers according to the rule
//! for its number. `NoAnswer` holds the connection open until the caller
//! gives up. The request log is at `GET /requests` (cleared with
//! `DELETE /requests`) and the script at `GET /script` / `PUT /script`.

use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use comaguard_core::gateway::{Behavior, GatewayScript};

use crate::gateway::{GatewayOutcome, GatewayRequest, GatewayResponse};

/// How long a `NoAnswer` request is held before the connection is dropped.
pub const NO_ANSWER_HOLD: Duration = Duration::from_secs(600);

#[derive(Debug, Default)]
pub struct MockGateway {
    script: RwLock<GatewayScript>,
    requests: Mutex<Vec<GatewayRequest>>,
}

impl MockGateway {
    pub fn new(script: GatewayScript) -> Arc<Self> {
        Arc::new(Self {
            script: RwLock::new(script),
            requests: Mutex::new(Vec::new()),
        })
    }

    pub fn requests(&self) -> Vec<GatewayRequest> {
        self.requests.lock().expect("request log").clone()
    }

    pub fn set_script(&self, script: GatewayScript) {
        *self.script.write().expect("script lock") = script;
    }

    pub fn router(self: &Arc<Self>) -> Router {
        Router::new()
            .route("/notify", post(notify))
            .route("/requests", get(list_requests).delete(clear_requests))
            .route("/script", get(get_script).put(put_script).post(put_script))
            .with_state(self.clone())
    }
}

async fn notify(
    State(mock): State<Arc<MockGateway>>,
    Json(req): Json<GatewayRequest>,
) -> Result<Json<GatewayResponse>, StatusCode> {
    let rule = mock.script.read().expect("script lock").rule_for(&req.number);
    tracing::info!(number = %req.number, channel = ?req.channel, ?rule, "notify");
    mock.requests.lock().expect("request log").push(req);
    tokio::time::sleep(Duration::from_millis(rule.delay_ms)).await;
    let outcome = match rule.behavior {
        Behavior::Deliver => GatewayOutcome::Delivered,
        Behavior::Fail => GatewayOutcome::Failed,
        Behavior::NoAnswer => {
            tokio::time::sleep(NO_ANSWER_HOLD).await;
            return Err(StatusCode::GATEWAY_TIMEOUT);
        }
    };
    Ok(Json(GatewayResponse { outcome }))
}

async fn list_requests(State(mock): State<Arc<MockGateway>>) -> Json<Vec<GatewayRequest>> {
    Json(mock.requests())
}

async fn clear_requests(State(mock): State<Arc<MockGateway>>) -> StatusCode {
    mock.requests.lock().expect("request log").clear();
    StatusCode::NO_CONTENT
}

async fn get_script(State(mock): State<Arc<MockGateway>>) -> Json<GatewayScript> {
    Json(mock.script.read().expect("script lock").clone())
}

async fn put_script(State(mock): State<Arc<MockGateway>>, Json(script): Json<GatewayScript>) -> StatusCode {
    mock.set_script(script);
    StatusCode::NO_CONTENT
}
