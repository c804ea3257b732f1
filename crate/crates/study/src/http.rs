//! HTTP routes.
//!
//! | method | path                        | body                    |
//! |--------|-----------------------------|-------------------------|
//! | POST   | `/api/session`              |                         |
//! | GET    | `/api/session/{id}/trial`   |                         |
//! | POST   | `/api/session/{id}/answer`  | `{"trial_id", "class"}` |
//! | GET    | `/api/results`              |                         |
//! | GET    | `/api/examples`             |                         |
//! | GET    | `/media/{file}`             |                         |
//!
//! Anything else falls through to the optional static directory.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::state::Study;
use crate::StudyError;

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let status = match &self {
            StudyError::UnknownSession => StatusCode::UNAUTHORIZED,
            StudyError::InvalidClass(_) => StatusCode::BAD_REQUEST,
            StudyError::Conflict(_) => StatusCode::CONFLICT,
            StudyError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            StudyError::MissingInput(_) | StudyError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct Answer {
    trial_id: u64,
    class: String,
}

type Shared = Arc<Study>;

async fn create_session(State(s): State<Shared>) -> Result<impl IntoResponse, StudyError> {
    Ok((StatusCode::CREATED, Json(s.create_session()?)))
}

async fn next_trial(State(s): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, StudyError> {
    Ok(Json(s.next_trial(&id)?))
}

async fn answer(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(a): Json<Answer>,
) -> Result<impl IntoResponse, StudyError> {
    // the append is fsynced; keep it off the async workers
    let ack = tokio::task::spawn_blocking(move || s.submit_answer(&id, a.trial_id, &a.class))
        .await
        .map_err(|e| StudyError::Storage(e.to_string()))??;
    Ok(Json(ack))
}

async fn results(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.results())
}

async fn examples(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.examples())
}

async fn media(State(s): State<Shared>, Path(name): Path<String>) -> Response {
    let Some(path) = s.media_path(&name).map(|p| p.to_path_buf()) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => {
            let mime = match path.extension().and_then(|e| e.to_str()) {
                Some("jpg" | "jpeg") => "image/jpeg",
                _ => "image/png",
            };
            ([(header::CONTENT_TYPE, mime), (header::CACHE_CONTROL, "no-store")], bytes).into_response()
        }
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(study: Arc<Study>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/trial", get(next_trial))
        .route("/api/session/{id}/answer", post(answer))
        .route("/api/results", get(results))
        .route("/api/examples", get(examples))
        .route("/media/{file}", get(media))
        .with_state(study);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    study: Arc<Study>,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(study, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
