use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hrw_core::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    BadRequest(String),

    /// The request refers to a revision other than the one available.
    #[error("{0}")]
    Stale(String),

    #[error("{0}")]
    Conflict(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct Body {
    error: &'static str,
    message: String,
}

impl ApiError {
    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Stale(_) => "stale",
            ApiError::Conflict(_) => "conflict",
            ApiError::Internal(_) => "internal",
            ApiError::Core(e) => core_kind(e),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Stale(_) | ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Core(e) => match e {
                CoreError::InvalidVolume(_)
                | CoreError::Format { .. }
                | CoreError::Seeds(_)
                | CoreError::Json(_)
                | CoreError::Io { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                CoreError::InvalidArgument(_) | CoreError::InvalidAddress { .. } => StatusCode::BAD_REQUEST,
                CoreError::Cancelled => StatusCode::CONFLICT,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }
}

pub fn core_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::InvalidVolume(_) => "invalid_volume",
        CoreError::Format { .. } => "format",
        CoreError::Seeds(_) => "seeds",
        CoreError::Json(_) => "json",
        CoreError::Io { .. } => "io",
        CoreError::InvalidArgument(_) | CoreError::InvalidAddress { .. } => "invalid_argument",
        CoreError::Cancelled => "cancelled",
        CoreError::Storage { .. } => "storage",
        CoreError::MissingNeighbors { .. } | CoreError::Coverage { .. } | CoreError::Invariant(_) => "internal",
        CoreError::Generation { .. } => "generation",
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.kind(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
