// SPDX-License-Identifier: MIT OR Apache-2.0

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use super::resources::ResourceError;
use crate::glossstore::StoreError;
use crate::model::ModelError;
use crate::projection::ProjectionError;

/// An error response: `{"error": {"code", "message", "details"?}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(d) = self.details {
            error["details"] = d;
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        match e {
            StoreError::NotFound { .. } => ApiError::not_found(message),
            StoreError::AnchorRange { field, value, bound } => ApiError::new(unprocessable, "anchor_range", message)
                .with_details(json!({ "field": field, "value": value, "bound": bound })),
            StoreError::Validation(_) => ApiError::validation(message),
            StoreError::ImmutableField(field) => {
                ApiError::new(unprocessable, "immutable_field", message).with_details(json!({ "field": field }))
            }
            StoreError::Conflict { what, id } => {
                ApiError::new(StatusCode::CONFLICT, "conflict", message).with_details(json!({ "kind": what, "id": id }))
            }
            StoreError::Parse { line, .. } => {
                ApiError::new(unprocessable, "parse_error", message).with_details(json!({ "line": line }))
            }
            StoreError::Corrupt { .. } | StoreError::Io { .. } => {
                tracing::error!(error = %message, "gloss store failure");
                ApiError::internal("gloss store unavailable")
            }
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let message = e.to_string();
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        match e {
            ModelError::ContextLength { len, limit } => ApiError::new(unprocessable, "too_long", message)
                .with_details(json!({ "token_count": len, "limit": limit })),
            ModelError::EmptyInput => ApiError::validation(message),
            ModelError::OutOfRange { what, index, bound } => ApiError::new(unprocessable, "out_of_range", message)
                .with_details(json!({ "field": what, "value": index, "bound": bound })),
            other => {
                tracing::error!(error = %other, "model failure");
                ApiError::internal("model failure")
            }
        }
    }
}

impl From<ProjectionError> for ApiError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::OutOfRange { token_pos, n_tokens } => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "out_of_range",
                e.to_string(),
            )
            .with_details(json!({ "field": "token_pos", "value": token_pos, "bound": n_tokens })),
            other => {
                tracing::error!(error = %other, "projection failure");
                ApiError::internal("projection failure")
            }
        }
    }
}

impl From<ResourceError> for ApiError {
    fn from(e: ResourceError) -> Self {
        match e {
            ResourceError::Model(m) => m.into(),
            ResourceError::Projection(p) => p.into(),
        }
    }
}
