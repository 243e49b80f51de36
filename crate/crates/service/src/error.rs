use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use ferry_core::ocp::Diagnostics;
use ferry_core::planner::PlanError;
use ferry_core::scenario::ScenarioError;

/// Error body: `{"error": kind, "message": ..., "field"?: ..., "diagnostics"?: ...}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, error, message: message.into(), field: None, diagnostics: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} with id {id:?}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PlanError> for ApiError {
    fn from(e: PlanError) -> Self {
        let message = e.to_string();
        match e {
            PlanError::Scenario(_) | PlanError::Build(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "build_error", message),
            PlanError::PlanFailed(d) => {
                ApiError { diagnostics: Some(d), ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "plan_failed", message) }
            }
            PlanError::SessionComplete { .. } => ApiError::new(StatusCode::CONFLICT, "session_complete", message),
            PlanError::TimeReversal { .. } => ApiError::new(StatusCode::CONFLICT, "time_reversal", message),
            PlanError::NoActivePlan => ApiError::new(StatusCode::CONFLICT, "no_active_plan", message),
        }
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

/// Parses a JSON body, naming the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = (path != ".").then_some(path);
        ApiError { field, ..ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", inner.to_string()) }
    })
}
