use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use comaguard_core::DetectorError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("record {index}: {source}")]
    Rejected {
        index: usize,
        #[source]
        source: DetectorError,
    },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("detector: {0}")]
    Detector(#[from] DetectorError),
}

impl ServiceError {
    pub fn field(field: &str, reason: impl std::fmt::Display) -> Self {
        ServiceError::InvalidField {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidField { .. } | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Rejected { source, .. } => match source {
                DetectorError::NonMonotonicInput { .. } => StatusCode::CONFLICT,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
            ServiceError::Storage(_) | ServiceError::Detector(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        match &self {
            ServiceError::InvalidField { field, .. } => body["field"] = json!(field),
            ServiceError::Rejected { index, .. } => body["index"] = json!(index),
            _ => {}
        }
        (self.status(), Json(body)).into_response()
    }
}
