use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use notecast_core::llm::LlmError;
use notecast_core::logicflow::FlowError;
use notecast_core::narration::NarrationError;
use notecast_core::notebook::NotebookError;
use notecast_core::script::ScriptError;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    VersionConflict {
        expected: u64,
        actual: u64,
    },
    /// A module error passed through as-is.
    Invalid {
        kind: String,
        message: String,
    },
    BadGateway {
        kind: String,
        message: String,
    },
    Internal(String),
}

/// Variant name of a derived `Debug` value: `SpanOverlap { .. }` gives
/// `SpanOverlap`.
pub(crate) fn variant<E: std::fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or("Error")
        .to_string()
}

impl ApiError {
    pub fn invalid<E: std::fmt::Debug + std::fmt::Display>(e: E) -> Self {
        ApiError::Invalid {
            kind: variant(&e),
            message: e.to_string(),
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::VersionConflict { .. } => StatusCode::CONFLICT,
            ApiError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadGateway { .. } => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = match self {
            ApiError::NotFound(what) => json!({"error": "NotFound", "message": what}),
            ApiError::VersionConflict { expected, actual } => json!({
                "error": "VersionConflict",
                "message": format!("version {expected} is stale; current version is {actual}"),
                "version": actual,
            }),
            ApiError::Invalid { kind, message } | ApiError::BadGateway { kind, message } => {
                json!({"error": kind, "message": message})
            }
            ApiError::Internal(message) => json!({"error": "Internal", "message": message}),
        };
        (status, Json(body)).into_response()
    }
}

impl From<ScriptError> for ApiError {
    fn from(e: ScriptError) -> Self {
        match e {
            ScriptError::UnknownId(id) => ApiError::NotFound(format!("unknown id {id}")),
            ScriptError::UnknownScene(id) => ApiError::NotFound(format!("unknown scene {id}")),
            other => ApiError::invalid(other),
        }
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::UnknownNode(id) => ApiError::NotFound(format!("unknown flow node {id}")),
            other => ApiError::invalid(other),
        }
    }
}

impl From<NotebookError> for ApiError {
    fn from(e: NotebookError) -> Self {
        ApiError::invalid(e)
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::ProviderUnreachable(_) | LlmError::Provider { .. } => ApiError::BadGateway {
                kind: variant(&e),
                message: e.to_string(),
            },
            other => ApiError::invalid(other),
        }
    }
}

impl From<NarrationError> for ApiError {
    fn from(e: NarrationError) -> Self {
        match e {
            NarrationError::Script(s) => s.into(),
            NarrationError::Llm(l) => l.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names() {
        let e = ScriptError::SpanOverlap {
            start: 1,
            end: 2,
            existing: "e0-1".into(),
        };
        assert_eq!(variant(&e), "SpanOverlap");
        assert_eq!(variant(&ScriptError::EmptyText), "EmptyText");
        assert_eq!(variant(&ScriptError::TooManyLinks(3)), "TooManyLinks");
    }
}
