use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use stackrefine_core::Error;

/// An error response: status code plus a JSON body `{"error": ..., "details": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            details: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

fn status_of(err: &Error) -> StatusCode {
    match err {
        Error::AtSlice { source, .. } => status_of(source),
        Error::SessionFinished | Error::SliceNotFetched(_) => StatusCode::CONFLICT,
        Error::SliceOutOfRange { .. } => StatusCode::NOT_FOUND,
        Error::Diverged { .. } | Error::Io { .. } | Error::Replay(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

fn details_of(err: &Error) -> Option<Value> {
    match err {
        Error::AtSlice { slice, source } => {
            let mut inner = details_of(source).unwrap_or_else(|| json!({}));
            inner["slice"] = json!(slice);
            Some(inner)
        }
        Error::Diverged {
            step,
            region,
            user,
            length,
            distance,
        } => Some(json!({
            "step": step,
            // NaN is not valid JSON
            "max_abs_terms": {
                "region": region.to_string(),
                "user": user.to_string(),
                "length": length.to_string(),
                "distance": distance.to_string(),
            }
        })),
        _ => None,
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        Self {
            status: status_of(&err),
            message: err.to_string(),
            details: details_of(&err),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, "{}", self.message);
        }
        let mut body = json!({ "error": self.message });
        if let Some(details) = self.details {
            body["details"] = details;
        }
        (self.status, Json(body)).into_response()
    }
}
