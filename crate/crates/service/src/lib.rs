//! HTTP front end: region analysis as asynchronous jobs, with each run's
//! bundle stored under `{runs_dir}/{job_id}`.

mod api;
mod jobs;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::HeaderValue;
use axum::Router;
use panelmap::geo::DEFAULT_TILE_CAP;
use panelmap::{BackendConfig, InferenceBackend, PipelineConfig, ProviderConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};

pub use api::{ApiError, SubmitRequest};
pub use jobs::{JobRecord, JobState, JobStore, Progress};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub runs_dir: PathBuf,
    pub provider: ProviderConfig,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub tile_cap: usize,
    pub min_zoom: u8,
    pub max_zoom: u8,
    /// Jobs allowed to run at once; others wait in `queued`.
    pub max_running_jobs: usize,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            runs_dir: PathBuf::from("runs"),
            provider: ProviderConfig::default(),
            backend: BackendConfig::default(),
            pipeline: PipelineConfig::default(),
            tile_cap: DEFAULT_TILE_CAP,
            min_zoom: 19,
            max_zoom: 21,
            max_running_jobs: 2,
            cors_origin: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    pub cfg: ServiceConfig,
    pub backend: Arc<dyn InferenceBackend>,
    pub jobs: JobStore,
    running: Semaphore,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        cfg.pipeline.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        if cfg.min_zoom > cfg.max_zoom {
            return Err(ServiceError::Config("min_zoom is above max_zoom".into()));
        }
        let backend = cfg.backend.build().map_err(|e| ServiceError::Config(e.to_string()))?;
        Self::with_backend(cfg, backend)
    }

    pub fn with_backend(cfg: ServiceConfig, backend: Arc<dyn InferenceBackend>) -> Result<Arc<Self>, ServiceError> {
        std::fs::create_dir_all(&cfg.runs_dir)?;
        let running = Semaphore::new(cfg.max_running_jobs.max(1));
        Ok(Arc::new(Self { cfg, backend, jobs: JobStore::default(), running }))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = match state.cfg.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => CorsLayer::new().allow_origin(origin),
        _ => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    api::routes().with_state(state).layer(cors)
}

/// Serve until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
