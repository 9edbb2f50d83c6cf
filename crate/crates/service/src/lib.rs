//! HTTP API over analysis sessions.
//!
//! All routes live under `/v1`. Request and response bodies are JSON, except
//! mask and overlay artifacts, which are served as PNG. Every error response
//! carries an [`ApiError`] body. There is no authentication; deployments are
//! expected to sit behind a proxy that provides it.

mod error;
mod eval;
mod sessions;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{DefaultBodyLimit, FromRequest, Request};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use canopy_agent::{Agent, Session, SessionConfig};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use eval::{EvalRequest, JobState};

pub const DEFAULT_MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Server-side paths in requests must resolve inside this directory.
    pub data_root: PathBuf,
    pub max_body_bytes: usize,
    /// Built UI bundle served at `/` when set.
    pub ui_dir: Option<PathBuf>,
    pub max_steps: usize,
}

impl ServiceConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self {
            data_root: data_root.into(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            ui_dir: None,
            max_steps: canopy_agent::session::DEFAULT_MAX_STEPS,
        }
    }
}

pub(crate) type SessionHandle = Arc<Mutex<Session>>;

pub struct AppState {
    pub config: ServiceConfig,
    pub agent: Agent,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    jobs: RwLock<HashMap<String, JobState>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, agent: Agent) -> Arc<Self> {
        Arc::new(Self {
            config,
            agent,
            sessions: RwLock::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
        })
    }

    pub(crate) fn new_session(&self) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let config = SessionConfig {
            max_steps: self.config.max_steps,
            data_root: Some(self.config.data_root.clone()),
        };
        let session = Session::new(id.clone(), config);
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    pub(crate) fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {id}")))
    }
}

/// JSON body extractor whose rejections use the [`ApiError`] shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(v) = Json::<T>::from_request(req, state).await?;
        Ok(Self(v))
    }
}

async fn health(axum::extract::State(state): axum::extract::State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "tools": state.agent.registry().names(),
        "llm_configured": state.agent.has_client(),
    }))
}

async fn not_found(req: Request) -> ApiError {
    ApiError::not_found(
        "route_not_found",
        format!("no route for {} {}", req.method(), req.uri().path()),
    )
}

async fn method_not_allowed(req: Request) -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        format!("{} is not allowed on {}", req.method(), req.uri().path()),
    )
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(sessions::create))
        .route("/sessions/{id}", get(sessions::describe))
        .route("/sessions/{id}/pair", post(sessions::upload_pair))
        .route("/sessions/{id}/messages", post(sessions::post_message))
        .route("/sessions/{id}/artifacts/{aid}", get(sessions::artifact))
        .route("/eval", post(eval::submit))
        .route("/eval/{job}", get(eval::status))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(state.config.max_body_bytes))
        .with_state(Arc::clone(&state));
    let app = Router::new().nest("/v1", api);
    match &state.config.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(not_found),
    }
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
