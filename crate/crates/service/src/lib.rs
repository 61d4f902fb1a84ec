//! Read-mostly HTTP API over an atlas data directory.
//!
//! Every response is served from an immutable [`Snapshot`]. A reload builds
//! a complete new snapshot off the request path and swaps it in with a
//! single pointer store; readers holding the old one finish undisturbed.

mod snapshot;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use atlas_core::{StudyRegion, ValidationReport};
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use thiserror::Error;

pub use snapshot::Snapshot;

pub const RELOAD_TOKEN_ENV: &str = "ATLAS_RELOAD_TOKEN";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub region: StudyRegion,
    /// Bearer token for `POST /api/reload`. Reload is refused when unset.
    pub reload_token: Option<String>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, bind: SocketAddr) -> Self {
        ServiceConfig {
            bind,
            data_dir: data_dir.into(),
            region: StudyRegion::default(),
            reload_token: std::env::var(RELOAD_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
}

pub struct AppState {
    config: ServiceConfig,
    current: RwLock<Option<Arc<Snapshot>>>,
    reload_lock: tokio::sync::Mutex<()>,
}

impl AppState {
    /// State with no snapshot; data endpoints answer 503 until a load succeeds.
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            config,
            current: RwLock::new(None),
            reload_lock: tokio::sync::Mutex::new(()),
        })
    }

    pub fn with_snapshot(config: ServiceConfig, snapshot: Snapshot) -> Arc<Self> {
        let state = AppState::new(config);
        state.install(snapshot);
        state
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    fn install(&self, snapshot: Snapshot) {
        *self.current.write().expect("snapshot lock poisoned") = Some(Arc::new(snapshot));
    }

    /// Loads the data directory and swaps the snapshot in on success. On
    /// failure the current snapshot is left in place.
    pub async fn reload(self: &Arc<Self>) -> Result<Arc<Snapshot>, ValidationReport> {
        let _guard = self.reload_lock.lock().await;
        let dir = self.config.data_dir.clone();
        let region = self.config.region;
        let built = tokio::task::spawn_blocking(move || Snapshot::load(&dir, &region))
            .await
            .expect("snapshot builder panicked")?;
        self.install(built);
        Ok(self.snapshot().expect("just installed"))
    }
}

fn json(status: StatusCode, body: impl Into<String>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body.into()).into_response()
}

fn error(status: StatusCode, message: &str) -> Response {
    json(status, serde_json::json!({ "error": message }).to_string())
}

fn unavailable() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "no corpus loaded")
}

fn with_snapshot(state: &AppState, f: impl FnOnce(&Snapshot) -> Response) -> Response {
    match state.snapshot() {
        Some(s) => f(&s),
        None => unavailable(),
    }
}

async fn languages(State(state): State<Arc<AppState>>) -> Response {
    with_snapshot(&state, |s| json(StatusCode::OK, s.languages_body()))
}

async fn sources(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    with_snapshot(&state, |s| match s.sources_body(&id) {
        Some(body) => json(StatusCode::OK, body),
        None => error(StatusCode::NOT_FOUND, &format!("unknown language `{id}`")),
    })
}

async fn base(State(state): State<Arc<AppState>>) -> Response {
    with_snapshot(&state, |s| json(StatusCode::OK, s.base_body()))
}

async fn highlight(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    with_snapshot(&state, |s| match s.highlight_body(&id) {
        Some(body) => json(StatusCode::OK, body),
        None => error(StatusCode::NOT_FOUND, &format!("unknown language `{id}`")),
    })
}

async fn overlay(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    with_snapshot(&state, |s| match s.overlay_body(&id) {
        Some(body) => json(StatusCode::OK, body),
        None => error(StatusCode::NOT_FOUND, &format!("unknown feature `{id}`")),
    })
}

async fn topics(State(state): State<Arc<AppState>>) -> Response {
    with_snapshot(&state, |s| json(StatusCode::OK, s.stats_body()))
}

#[derive(Serialize)]
struct ReloadFailure {
    error: &'static str,
    report: Vec<String>,
}

fn authorized(state: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = &state.config.reload_token else {
        return false;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|given| given.as_bytes() == expected.as_bytes())
}

async fn reload(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if !authorized(&state, &headers) {
        return error(StatusCode::UNAUTHORIZED, "bad reload token");
    }
    match state.reload().await {
        Ok(s) => {
            tracing::info!(sources = s.corpus().sources().len(), "reloaded corpus");
            json(StatusCode::OK, s.stats_body())
        }
        Err(report) => {
            tracing::warn!("reload rejected:\n{report}");
            let body = ReloadFailure {
                error: "validation failed",
                report: report.findings.iter().map(ToString::to_string).collect(),
            };
            json(
                StatusCode::UNPROCESSABLE_ENTITY,
                serde_json::to_string(&body).expect("report serializes"),
            )
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/languages", get(languages))
        .route("/api/languages/{id}/sources", get(sources))
        .route("/api/map/base", get(base))
        .route("/api/map/highlight/{id}", get(highlight))
        .route("/api/map/overlay/{feature_id}", get(overlay))
        .route("/api/stats/topics", get(topics))
        .route("/api/reload", post(reload))
        .with_state(state)
}

/// Loads the data directory and serves until the process is stopped. A
/// failed initial load is logged and the API answers 503 until a reload
/// succeeds.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = config.bind;
    let state = AppState::new(config);
    if let Err(report) = state.reload().await {
        tracing::error!("initial load failed:\n{report}");
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
