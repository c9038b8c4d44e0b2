use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lagrisk_core::{Error, ErrorClass};
use serde::Serialize;

/// Every non-2xx response body: a stable machine-readable `code` and a
/// human-readable `message`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

pub type ApiResult<T> = Result<T, ApiError>;

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str, name: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{name}`"))
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, code, message)
    }

    /// Engine error with the status implied by its class: bad input is 400,
    /// degenerate analyses 422, range errors 404.
    pub fn engine(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Input => StatusCode::BAD_REQUEST,
            ErrorClass::Degenerate => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::Range => StatusCode::NOT_FOUND,
        };
        ApiError::new(status, e.code(), e.to_string())
    }

    /// Engine error that always maps to 422 (well-formed request the engine
    /// cannot act on).
    pub fn unprocessable(e: Error) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
