use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;

use rumour_core::AnnotationError;

/// Error body: `{"error": {"code": "...", "message": "..."}}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn body(&self) -> Vec<u8> {
        serde_json::to_vec(&ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
            },
        })
        .expect("error body serialises")
    }

    /// Maps an annotation failure. `story_in_path` decides whether an unknown
    /// story is a missing resource (404) or a bad reference in the body (422).
    pub fn from_annotation(e: AnnotationError, story_in_path: bool) -> Self {
        use AnnotationError as E;
        let msg = e.to_string();
        match e {
            E::UnknownThread(_) => Self::not_found("unknown_thread", msg),
            E::UnknownStory(_) if story_in_path => Self::not_found("unknown_story", msg),
            E::UnknownStory(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_story", msg),
            E::MissingStory => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_story", msg),
            E::StoryOnNonRumour(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "story_on_nonrumour", msg)
            }
            E::NotARumour(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "not_a_rumour", msg),
            E::EmptyName => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_name", msg),
            E::NameCollision { .. } => Self::new(StatusCode::CONFLICT, "name_collision", msg),
            E::OutOfOrder { .. } | E::Io { .. } | E::CorruptLog { .. } => Self::internal(msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = self.body();
        (
            self.status,
            [(axum::http::header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response()
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        Self::bad_request("malformed_body", e.to_string())
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => (
            status,
            [(axum::http::header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

pub(crate) fn ok<T: Serialize>(value: &T) -> Response {
    json_response(StatusCode::OK, value)
}
