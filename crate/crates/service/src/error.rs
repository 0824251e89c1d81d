use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use curate_core::corpus::CorpusError;
use curate_core::datadir::StoreError;
use curate_core::graph::EngineError;
use serde_json::json;

/// An error response: `{"error": <code>, "message": <text>}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or unknown bearer token")
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} {id} not found"))
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedRequest", message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

/// Rejected mutations are conflicts carrying the engine's error name.
impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::StorageFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::CONFLICT,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let (status, code) = match &e {
            CorpusError::DuplicateId { .. } => (StatusCode::CONFLICT, "DuplicateId"),
            CorpusError::MissingField { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "MissingField"),
            CorpusError::EmptyBody { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "EmptyBody"),
            CorpusError::MalformedRecord { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "MalformedRecord"),
            CorpusError::NotFound(_) => (StatusCode::NOT_FOUND, "NotFound"),
            CorpusError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Corpus(c) => c.into(),
            StoreError::NoCorpus(id) => ApiError::not_found("corpus", &id),
            StoreError::Embed(err) => ApiError::new(StatusCode::BAD_GATEWAY, "EmbeddingFailed", err.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}
