use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// Error body: `{code, message, legal_actions?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal_actions: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown recipe {0:?}")]
    UnknownRecipe(String),
    #[error("{message}")]
    IllegalAction { message: String, legal_actions: Vec<String> },
    #[error("session is finished ({0})")]
    Finished(String),
    #[error("session is at turn {actual}, not {expected}")]
    TurnMismatch { expected: usize, actual: usize },
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownScenario(_) | ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::UnknownRecipe(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::IllegalAction { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Finished(_) | ApiError::TurnMismatch { .. } => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownScenario(_) => "unknown_scenario",
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::UnknownRecipe(_) => "unknown_recipe",
            ApiError::IllegalAction { .. } => "illegal_action",
            ApiError::Finished(_) => "session_finished",
            ApiError::TurnMismatch { .. } => "turn_mismatch",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().into(),
            message: self.to_string(),
            legal_actions: match self {
                ApiError::IllegalAction { legal_actions, .. } => Some(legal_actions.clone()),
                _ => None,
            },
        }
    }
}

impl From<cirl_core::CirlError> for ApiError {
    fn from(e: cirl_core::CirlError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
