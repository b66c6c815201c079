//! Outbound notification gateway.
//!
//! The HTTP client posts one [`GatewayRequest`] per contact attempt to
//! `{gateway_url}/notify` and maps the answer onto an attempt outcome.
//! A gateway that cannot be reached, or answers with an error status or an
//! unreadable body, counts as `Failed`. A gateway that does not answer
//! within the client timeout yields no outcome; the attempt then runs into
//! the per-contact timeout on the session's logical clock.

use std::time::Duration;

use comaguard_core::gateway::GatewayScript;
use comaguard_core::{AttemptOutcome, AttemptRequest, Channel};
use serde::{Deserialize, Serialize};

pub const ENV_GATEWAY_URL: &str = "COMAGUARD_GATEWAY_URL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayRequest {
    pub session_id: String,
    pub number: String,
    pub channel: Channel,
    pub message: String,
}

impl GatewayRequest {
    pub fn for_attempt(session_id: &str, attempt: &AttemptRequest) -> Self {
        let who = if attempt.contact.label.is_empty() {
            &attempt.contact.id
        } else {
            &attempt.contact.label
        };
        Self {
            session_id: session_id.to_string(),
            number: attempt.contact.number.clone(),
            channel: attempt.channel,
            message: format!(
                "{who}: the wearer of session {session_id} is immobile with signs of danger and \
                 has not acknowledged the alarm. Please check on them."
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayOutcome {
    Delivered,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayResponse {
    pub outcome: GatewayOutcome,
}

impl From<GatewayOutcome> for AttemptOutcome {
    fn from(o: GatewayOutcome) -> Self {
        match o {
            GatewayOutcome::Delivered => AttemptOutcome::Delivered,
            GatewayOutcome::Failed => AttemptOutcome::Failed,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Gateway {
    Http { client: reqwest::Client, url: String },
    /// Answers from a script without any network traffic.
    Scripted(GatewayScript),
}

impl Gateway {
    pub fn http(base_url: &str, timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("static client configuration");
        Gateway::Http {
            client,
            url: format!("{}/notify", base_url.trim_end_matches('/')),
        }
    }

    /// `None` means no answer arrived in time.
    pub async fn notify(&self, req: &GatewayRequest, per_contact_timeout_ms: u64) -> Option<AttemptOutcome> {
        match self {
            Gateway::Scripted(script) => script.offline_reply(&req.number, per_contact_timeout_ms),
            Gateway::Http { client, url } => {
                let resp = match client.post(url).json(req).send().await {
                    Ok(r) => r,
                    Err(e) if e.is_timeout() => return None,
                    Err(e) => {
                        tracing::warn!(error = %e, "gateway unreachable");
                        return Some(AttemptOutcome::Failed);
                    }
                };
                if !resp.status().is_success() {
                    tracing::warn!(status = %resp.status(), "gateway error status");
                    return Some(AttemptOutcome::Failed);
                }
                match resp.json::<GatewayResponse>().await {
                    Ok(body) => Some(body.outcome.into()),
                    Err(e) if e.is_timeout() => None,
                    Err(e) => {
                        tracing::warn!(error = %e, "unreadable gateway response");
                        Some(AttemptOutcome::Failed)
                    }
                }
            }
        }
    }
}
