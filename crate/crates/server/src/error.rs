use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use reflexa_core::persist::PersistError;
use reflexa_core::session::SessionError;
use reflexa_core::EngineError;
use serde_json::json;

/// Error body: `{"error_code": ..., "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = e.code();
        let status = match code {
            "unknown-node" | "unknown-spark" => StatusCode::NOT_FOUND,
            "has-children" => StatusCode::CONFLICT,
            "empty-text" | "dim-mismatch" | "zero-vector" => StatusCode::BAD_GATEWAY,
            _ if e.is_upstream() => StatusCode::BAD_GATEWAY,
            "io-error" | "invalid-catalog" | "stale-sequence" | "not-in-template" => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self::bad_request("invalid-settings", e.to_string())
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        let code = match e {
            PersistError::Io { .. } => "storage-error",
            _ => "corrupt-session",
        };
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{} {}: {}", self.status, self.code, self.message);
        }
        (self.status, Json(json!({"error_code": self.code, "message": self.message}))).into_response()
    }
}
