use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use canopy_agent::AgentError;
use serde::{Deserialize, Serialize};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            field: None,
        }
    }

    pub fn with_field(mut self, field: &str) -> Self {
        self.field = Some(field.to_string());
        self
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let status = r.status();
        let code = match status {
            StatusCode::PAYLOAD_TOO_LARGE => "payload_too_large",
            StatusCode::UNSUPPORTED_MEDIA_TYPE => "unsupported_media_type",
            StatusCode::UNPROCESSABLE_ENTITY => "invalid_body",
            _ => "malformed_json",
        };
        Self::new(status, code, r.body_text())
    }
}

impl From<canopy_core::Error> for ApiError {
    fn from(e: canopy_core::Error) -> Self {
        use canopy_core::Error as E;
        let message = e.to_string();
        match e.root() {
            E::DimensionMismatch { .. } => Self::bad_request("dimension_mismatch", message),
            E::MissingPrediction(id) => Self::not_found("missing_prediction", message).with_field(id),
            E::Io { .. } => Self::not_found("file_not_found", message),
            E::Decode { .. } => Self::bad_request("invalid_image", message),
            E::IdMismatch(_) => Self::bad_request("id_mismatch", message),
            E::Schema(_) | E::DuplicateId(_) | E::DanglingSplitRef { .. } | E::DuplicateSplit { .. } => {
                Self::bad_request("invalid_manifest", message)
            }
            E::EmptyCorpus => Self::bad_request("empty_corpus", message),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "analysis_error", message),
        }
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::PathEscape(_) => Self::bad_request("path_escape", e.to_string()),
            AgentError::ArtifactNotFound(_) => Self::not_found("artifact_not_found", e.to_string()),
            AgentError::Core(inner) => inner.into(),
            other => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "agent_error", other.to_string()),
        }
    }
}
