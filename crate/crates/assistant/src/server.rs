//! HTTP API over the pipeline and the session store.
//!
//! | route                       | method |
//! |-----------------------------|--------|
//! | `/sessions`                 | POST   |
//! | `/sessions/{id}/turns`      | POST   |
//! | `/sessions/{id}`            | GET    |
//! | `/healthz`                  | GET    |

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use convsearch_core::answer::AnswerError;
use convsearch_core::context::ContextError;
use convsearch_core::rerank::RerankError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::pipeline::{Pipeline, PipelineError};
use crate::sessions::SessionStore;

#[derive(Clone)]
pub struct AppState {
    /// `None` until an index is available; turns then answer 503.
    pub pipeline: Option<Arc<Pipeline>>,
    pub sessions: Arc<SessionStore>,
}

#[derive(Debug, Default, Deserialize)]
struct CreateSession {
    #[serde(default)]
    topic_label: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
}

#[derive(Debug, Deserialize)]
struct TurnRequest {
    query: String,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let unavailable = matches!(
            e,
            PipelineError::Rewrite(ContextError::RewriterUnavailable(_))
                | PipelineError::Rerank(RerankError::ScorerUnavailable(_))
                | PipelineError::Answer(AnswerError::SummarizerUnavailable(_))
        );
        match e {
            PipelineError::EmptyQuery => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_query", e.to_string()),
            _ if unavailable => Self::new(StatusCode::BAD_GATEWAY, "backend_unavailable", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?
    };
    let session_id = state.sessions.create(req.topic_label);
    Ok((StatusCode::CREATED, Json(Created { session_id })).into_response())
}

fn unknown(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.sessions.get(&id).ok_or_else(|| unknown(&id))?;
    let session = shared.lock().await;
    Ok(Json(&*session).into_response())
}

async fn post_turn(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let shared = state.sessions.get(&id).ok_or_else(|| unknown(&id))?;
    let req: TurnRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    if req.query.trim().is_empty() {
        return Err(PipelineError::EmptyQuery.into());
    }
    let pipeline = state
        .pipeline
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "index_unavailable", "no index is loaded"))?;
    // Turns within a session are serialized by holding its lock.
    let mut session = shared.lock_owned().await;
    let sessions = state.sessions.clone();
    let result = tokio::task::spawn_blocking(move || {
        let result = pipeline.process_turn(&mut session, &req.query)?;
        if let Err(e) = sessions.record(&session) {
            eprintln!("warning: {e}");
        }
        Ok::<_, PipelineError>(result)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(result).into_response())
}

/// 200 once an index is loaded, 503 before.
async fn healthz(State(state): State<AppState>) -> Response {
    let loaded = state.pipeline.is_some();
    let status = if loaded { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    let body = json!({
        "status": if loaded { "ok" } else { "index_unavailable" },
        "index_loaded": loaded,
        "passages": state.pipeline.as_ref().map_or(0, |p| p.index().doc_count()),
        "sessions": state.sessions.len(),
    });
    (status, Json(body)).into_response()
}
