use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    CrossShardStale,
    VersionMismatch,
    SessionExpired,
    OwnershipViolation,
    UnknownKey,
    KeyExists,
    BadRequest,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::CrossShardStale
            | ErrorCode::VersionMismatch
            | ErrorCode::OwnershipViolation
            | ErrorCode::KeyExists => StatusCode::CONFLICT,
            ErrorCode::SessionExpired => StatusCode::GONE,
            ErrorCode::UnknownKey => StatusCode::NOT_FOUND,
            ErrorCode::BadRequest => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// JSON error body: `{"code": ..., "detail": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, detail: Option<String>) -> Self {
        Self { code, detail }
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, Some(detail.into()))
    }

    pub fn status(&self) -> StatusCode {
        self.code.status()
    }
}

impl From<ori_core::Error> for ApiError {
    fn from(e: ori_core::Error) -> Self {
        use ori_core::Error as E;
        match e {
            E::UnknownKey(k) => ApiError::new(ErrorCode::UnknownKey, Some(k)),
            E::KeyExists(k) => ApiError::new(ErrorCode::KeyExists, Some(k)),
            E::Domain(msg) => ApiError::bad_request(msg),
            other => {
                tracing::error!(error = %other, "request failed");
                ApiError::new(ErrorCode::Internal, Some(other.to_string()))
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_table() {
        use ErrorCode::*;
        let table = [
            (CrossShardStale, 409),
            (VersionMismatch, 409),
            (OwnershipViolation, 409),
            (KeyExists, 409),
            (SessionExpired, 410),
            (UnknownKey, 404),
            (BadRequest, 422),
        ];
        for (code, status) in table {
            assert_eq!(code.status().as_u16(), status, "{code:?}");
        }
    }

    #[test]
    fn body_shape() {
        let e = ApiError::new(ErrorCode::CrossShardStale, Some("db_schema".into()));
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"code":"CrossShardStale","detail":"db_schema"}"#
        );
    }
}
