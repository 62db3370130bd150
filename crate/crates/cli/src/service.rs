//! HTTP endpoint serving review bundles and accepting selections.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::Mutex;

use crate::store::{RunStore, SelectionRequest, StoreError};

struct AppState {
    store: RunStore,
    // selection writes go through one writer at a time
    writer: Mutex<()>,
}

type Shared = Arc<AppState>;

impl IntoResponse for StoreError {
    fn into_response(self) -> Response {
        match self {
            StoreError::NotFound(what) => (
                StatusCode::NOT_FOUND,
                Json(json!({ "error": format!("not found: {what}") })),
            )
                .into_response(),
            StoreError::Invalid { message, offending_ids } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({ "error": message, "offending_ids": offending_ids })),
            )
                .into_response(),
            StoreError::Core(e) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({ "error": e.to_string() })),
            )
                .into_response(),
        }
    }
}

pub fn content_type(file: &str) -> &'static str {
    match file.rsplit_once('.').map(|(_, ext)| ext) {
        Some("ppm") => "image/x-portable-pixmap",
        Some("pgm") => "image/x-portable-graymap",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn list_runs(State(state): State<Shared>) -> Result<Response, StoreError> {
    Ok(Json(json!({ "runs": state.store.list_runs()? })).into_response())
}

async fn manifest(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, StoreError> {
    let bytes = state.store.manifest_bytes(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn image(State(state): State<Shared>, Path((id, file)): Path<(String, String)>) -> Result<Response, StoreError> {
    let bytes = state.store.image_bytes(&id, &file)?;
    Ok(([(header::CONTENT_TYPE, content_type(&file))], bytes).into_response())
}

async fn get_selection(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, StoreError> {
    match state.store.selection(&id)? {
        Some(sel) => Ok(Json(sel).into_response()),
        None => {
            let manifest = state.store.manifest(&id)?;
            Ok(Json(json!({
                "run_id": manifest.run_id,
                "class_id": manifest.class_id,
                "sample_ids": [],
                "source": "human",
                "revision": 0,
            }))
            .into_response())
        }
    }
}

async fn post_selection(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<SelectionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, StoreError> {
    let Json(request) = body.map_err(|e| StoreError::Invalid {
        message: format!("malformed selection: {}", e.body_text()),
        offending_ids: Vec::new(),
    })?;
    let _guard = state.writer.lock().await;
    let stored = state.store.write_selection(&id, request)?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

pub fn router(store: RunStore) -> Router {
    let state = Arc::new(AppState {
        store,
        writer: Mutex::new(()),
    });
    Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}/manifest", get(manifest))
        .route("/api/runs/{id}/images/{file}", get(image))
        .route("/api/runs/{id}/selections", get(get_selection).post(post_selection))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(store: RunStore, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "serving {} on http://{}",
        store.root().display(),
        listener.local_addr()?
    );
    axum::serve(listener, router(store)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_types() {
        assert_eq!(content_type("00001_original.ppm"), "image/x-portable-pixmap");
        assert_eq!(content_type("00001_heatmap.pgm"), "image/x-portable-graymap");
        assert_eq!(content_type("x"), "application/octet-stream");
    }
}
