//! JSON error bodies and the mapping from pipeline errors to status codes.

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use litrag_core::evaluation::EvalError;
use litrag_core::testset::TestsetError;
use litrag_core::{EngineError, IngestError, ProviderError};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Error response: `{"error": message, "retryable": bool}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub retryable: bool,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    retryable: bool,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            retryable: false,
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }

    pub fn no_index() -> Self {
        Self::conflict("no index built yet; run POST /api/index/build first")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            retryable: self.retryable,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        Self {
            status: StatusCode::BAD_GATEWAY,
            message: e.to_string(),
            retryable: e.retryable(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Provider(p) => p.into(),
            EngineError::NoIndex(_) => Self::conflict(e.to_string()),
            EngineError::UnknownDocument(ref d) => Self::conflict(format!(
                "document {d} is not in the built index; rebuild after uploading"
            )),
            EngineError::InvalidConfig(_) | EngineError::EmptyQuery => {
                Self::unprocessable(e.to_string())
            }
            EngineError::Index(_) | EngineError::Graph(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Provider(p) => p.into(),
            IngestError::EmptyDocument { .. } | IngestError::InvalidConfig(_) => {
                Self::unprocessable(e.to_string())
            }
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<TestsetError> for ApiError {
    fn from(e: TestsetError) -> Self {
        match e {
            TestsetError::Provider(p) => p.into(),
            other => Self::unprocessable(other.to_string()),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Engine(inner) => inner.into(),
            EvalError::NotFiltered | EvalError::NoModes => Self::unprocessable(e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

/// JSON body extractor that reports every rejection (syntax, schema or
/// content type) as 422 with the standard error body.
pub struct ApiJson<T>(pub T);

impl<T, S> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(rejection: JsonRejection) -> ApiError {
    ApiError::unprocessable(format!("malformed request body: {}", rejection.body_text()))
}
