//! HTTP service over the litrag pipeline: document upload, index builds,
//! chat sessions in vector, graph or hybrid mode, and evaluation runs.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/health` | index and graph status |
//! | POST | `/api/corpus/documents` | 201, uploads and chunks a document |
//! | GET | `/api/corpus/documents` | documents in the working corpus |
//! | GET | `/api/corpus/documents/{doc_id}/chunks/{chunk_id}` | chunk text |
//! | POST | `/api/index/build` | 202, queues a build job |
//! | GET | `/api/jobs/{job_id}` | job state and progress |
//! | POST | `/api/chat/sessions` | 201, new session |
//! | GET | `/api/chat/sessions/{id}` | full transcript |
//! | POST | `/api/chat/sessions/{id}/messages` | answer with citations |
//! | POST | `/api/eval/run` | 202, queues an evaluation |
//! | GET | `/api/eval/runs/{run_id}` | evaluation report |
//! | GET | `/api/eval/runs/{run_id}/report.md` | markdown report |
//!
//! Errors carry `{"error": message, "retryable": bool}`.

pub mod api;
pub mod error;
pub mod routes;
pub mod sessions;
pub mod state;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{Any, CorsLayer};

pub use error::{ApiError, ApiJson};
pub use sessions::{ChatSession, Turn};
pub use state::{AppState, JobState, JobStatus, ServiceConfig, DEFAULT_BIND};

const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    let cors = state.config().cors_origin.clone();
    let router = Router::new()
        .route("/health", get(routes::health))
        .route(
            "/api/corpus/documents",
            post(routes::upload).get(routes::list_documents),
        )
        .route(
            "/api/corpus/documents/{doc_id}/chunks/{chunk_id}",
            get(routes::get_chunk),
        )
        .route("/api/index/build", post(routes::start_build))
        .route("/api/jobs/{job_id}", get(routes::get_job))
        .route("/api/chat/sessions", post(routes::create_session))
        .route("/api/chat/sessions/{id}", get(routes::get_session))
        .route(
            "/api/chat/sessions/{id}/messages",
            post(routes::post_message),
        )
        .route("/api/eval/run", post(routes::start_eval))
        .route("/api/eval/runs/{run_id}", get(routes::get_eval))
        .route(
            "/api/eval/runs/{run_id}/report.md",
            get(routes::get_eval_markdown),
        )
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match cors.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => router.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods(Any)
                .allow_headers(Any),
        ),
        Some(Err(_)) => {
            tracing::warn!("ignoring invalid LITRAG_CORS_ORIGIN value");
            router
        }
        None => router,
    }
}

/// Serves until Ctrl-C on the configured bind address.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.config().bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "litrag service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
