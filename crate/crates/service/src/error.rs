use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use vizsynth_core::decompile::DecompileError;
use vizsynth_core::lang::ParseError;
use vizsynth_core::EvalError;

/// An error response: `{"error", "path"?, "index"?, "pos"?}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    /// Location of the offending field in the request body.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Operator index of an evaluation failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    /// Byte offset of a program parse failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: impl ToString) -> ApiError {
        ApiError {
            status,
            error: error.to_string(),
            path: None,
            index: None,
            pos: None,
        }
    }

    pub fn bad_request(path: impl Into<String>, error: impl ToString) -> ApiError {
        ApiError {
            path: Some(path.into()),
            ..ApiError::new(StatusCode::BAD_REQUEST, error)
        }
    }

    pub fn internal(error: impl ToString) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, error)
    }
}

impl From<DecompileError> for ApiError {
    fn from(e: DecompileError) -> ApiError {
        match &e {
            DecompileError::NoElements => ApiError::bad_request("elements", e),
            DecompileError::InvalidElement { index, .. } => {
                ApiError::bad_request(format!("elements[{index}]"), e)
            }
            DecompileError::TooManyLayers(_)
            | DecompileError::InconsistentGroup
            | DecompileError::Table(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e),
        }
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> ApiError {
        ApiError {
            pos: Some(e.pos),
            ..ApiError::bad_request("program", &e)
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> ApiError {
        ApiError {
            index: Some(e.index),
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e)
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
