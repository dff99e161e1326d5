use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use medkg::graph::GraphError;
use medkg::qa::QaError;
use medkg::review::ReviewError;
use serde::Serialize;

/// JSON error body: `{"error": <code>, "message": ..., "current_version": ...}`.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    /// Present on version conflicts so the client can refetch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_version: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, error, message: message.into(), current_version: None }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let message = e.to_string();
        match e {
            ReviewError::NotFound(_) => Self::not_found(message),
            ReviewError::Conflict { current, .. } => ApiError {
                current_version: Some(current),
                ..Self::new(StatusCode::CONFLICT, "version_conflict", message)
            },
            ReviewError::State(_) => Self::new(StatusCode::CONFLICT, "state", message),
            ReviewError::Invalid(_) => Self::invalid(message),
            ReviewError::Graph(GraphError::NotFound(_)) => Self::not_found(message),
            ReviewError::Graph(_) | ReviewError::Io { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl From<QaError> for ApiError {
    fn from(e: QaError) -> Self {
        let message = e.to_string();
        match e {
            QaError::EmptyQuestion | QaError::HopLimit(_) | QaError::NoProvider => Self::invalid(message),
            QaError::NoContext => Self::new(StatusCode::NOT_FOUND, "no_context", message),
            QaError::UngroundedAnswer { .. } | QaError::Provider(_) => Self::new(StatusCode::BAD_GATEWAY, "provider", message),
            QaError::Index(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        let message = e.to_string();
        match e {
            GraphError::NotFound(_) => Self::not_found(message),
            GraphError::HopLimit(_) | GraphError::Integrity(_) => Self::invalid(message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}
