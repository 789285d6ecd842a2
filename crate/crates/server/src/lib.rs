//! HTTP service over a directory of metric summary tables.
//!
//! Endpoints:
//!
//! - `GET /health`
//! - `GET /api/metrics`
//! - `GET /api/dimensions?metric=<name>`
//! - `POST /api/query` with a [`QueryRequest`] JSON body
//! - `POST /api/export` with the same body, answered with a CSV attachment
//!
//! Tables live in an immutable [`Snapshot`]. A reload builds a new snapshot
//! and swaps it in; each request works on the snapshot it started with.

pub mod api;

use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use ndsum_core::pipeline::load_metric_dir;
use serde::Deserialize;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use api::{run_export, run_query, ApiError, QueryRequest, QueryResponse, Tables};

#[derive(Debug, Default)]
pub struct Snapshot {
    pub tables: Tables,
    /// Still waiting for the first load.
    pub loading: bool,
}

#[derive(Debug)]
pub struct AppState {
    data_dir: Option<PathBuf>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl AppState {
    /// State serving fixed tables, with nothing to reload.
    pub fn with_tables(tables: Tables) -> Self {
        AppState {
            data_dir: None,
            snapshot: RwLock::new(Arc::new(Snapshot { tables, loading: false })),
        }
    }

    /// State that will serve `data_dir` once [`AppState::reload`] runs.
    pub fn pending(data_dir: impl Into<PathBuf>) -> Self {
        AppState {
            data_dir: Some(data_dir.into()),
            snapshot: RwLock::new(Arc::new(Snapshot {
                tables: Tables::new(),
                loading: true,
            })),
        }
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, tables: Tables) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot { tables, loading: false });
    }

    /// Reloads every table from the data directory and swaps the snapshot.
    /// On failure the previous snapshot stays in place. Returns the number
    /// of tables now loaded.
    pub fn reload(&self) -> ndsum_core::Result<usize> {
        let Some(dir) = &self.data_dir else {
            return Ok(self.snapshot().tables.len());
        };
        let tables = load_metric_dir(dir)?;
        let n = tables.len();
        self.replace(tables);
        Ok(n)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_vec(&api::ErrorBody {
            error: self.code,
            message: &self.message,
        })
        .expect("error body serializes");
        (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn json_response<T: serde::Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn loaded(state: &AppState) -> Result<Arc<Snapshot>, ApiError> {
    let snap = state.snapshot();
    if snap.loading {
        return Err(ApiError::unavailable("loading", "metric tables are still loading"));
    }
    Ok(snap)
}

async fn health() -> &'static str {
    "ok"
}

async fn metrics(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    if snap.tables.is_empty() {
        return Err(ApiError::unavailable("no_tables", "no metric tables are loaded"));
    }
    Ok(json_response(&api::metrics_info(&snap.tables)))
}

#[derive(Debug, Deserialize)]
struct DimensionsParams {
    metric: Option<String>,
}

async fn dimensions(
    State(state): State<Arc<AppState>>,
    Query(params): Query<DimensionsParams>,
) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    let metric = params
        .metric
        .ok_or_else(|| ApiError::bad_request("missing_metric", "query parameter `metric` is required"))?;
    Ok(json_response(&api::dimensions(&snap.tables, &metric)?))
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    let req = api::parse_request(&body)?;
    Ok(json_response(&run_query(&snap.tables, &req)?))
}

async fn export(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    let req = api::parse_request(&body)?;
    let (name, csv) = run_export(&snap.tables, &req)?;
    let disposition = HeaderValue::from_str(&format!("attachment; filename=\"{name}\""))
        .map_err(|e| ApiError::bad_request("invalid_filename", e.to_string()))?;
    let mut resp = Response::new(Body::from(csv));
    let headers = resp.headers_mut();
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("text/csv; charset=utf-8"),
    );
    headers.insert(header::CONTENT_DISPOSITION, disposition);
    Ok(resp)
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/api/metrics", get(metrics))
        .route("/api/dimensions", get(dimensions))
        .route("/api/query", post(query))
        .route("/api/export", post(export))
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Reloads the tables on every SIGHUP until the process exits.
#[cfg(unix)]
pub fn reload_on_sighup(state: Arc<AppState>) -> std::io::Result<()> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut hup = signal(SignalKind::hangup())?;
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let st = state.clone();
            match tokio::task::spawn_blocking(move || st.reload()).await {
                Ok(Ok(n)) => tracing::info!(tables = n, "reloaded metric tables"),
                Ok(Err(e)) => tracing::error!("reload failed, keeping previous tables: {e}"),
                Err(e) => tracing::error!("reload task failed: {e}"),
            }
        }
    });
    Ok(())
}

/// Serves until `shutdown` resolves. Tables load in the background; the
/// API answers 503 until they are in.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    static_dir: Option<&Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let loader = state.clone();
    tokio::task::spawn_blocking(move || match loader.reload() {
        Ok(n) => tracing::info!(tables = n, "loaded metric tables"),
        Err(e) => {
            tracing::error!("loading metric tables failed: {e}");
            loader.replace(Tables::new());
        }
    });
    #[cfg(unix)]
    reload_on_sighup(state.clone())?;
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
