//! HTTP routes. All engine mutations go through one mutex, so log appends
//! happen in the order the engine applied them.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

use crate::config::ExperimentConfig;
use crate::service::{ApiError, Experiment, JoinRequest, SubmitRequest};

/// Environment variable holding the admin bearer token.
pub const ADMIN_TOKEN_VAR: &str = "PREFRANK_ADMIN_TOKEN";

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    })
}

pub struct ServerOptions {
    pub admin_token: Option<String>,
    /// Directory for logs of experiments loaded through the admin endpoint.
    pub data_dir: PathBuf,
    pub media_root: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub clock: Clock,
}

struct Inner {
    experiment: Option<Experiment>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Mutex<Inner>>,
    admin_token: Option<Arc<str>>,
    data_dir: Arc<Path>,
    clock: Clock,
}

impl AppState {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panic mid-request leaves the engine consistent with the log
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn now(&self) -> u64 {
        (self.clock)()
    }

    fn require_admin(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        match (&self.admin_token, given) {
            (Some(want), Some(got)) if want.as_ref() == got => Ok(()),
            _ => Err(ApiError::Unauthorized),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code =
            StatusCode::from_u16(self.status_code()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (
            code,
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

fn with_experiment<T>(
    state: &AppState,
    f: impl FnOnce(&mut Experiment, u64) -> Result<T, ApiError>,
) -> Result<T, ApiError> {
    let now = state.now();
    let mut inner = state.lock();
    let exp = inner.experiment.as_mut().ok_or(ApiError::NotLoaded)?;
    f(exp, now)
}

async fn join(State(state): State<AppState>, Json(body): Json<JoinRequest>) -> Response {
    with_experiment(&state, |exp, now| {
        exp.join(body.evaluator_token.as_deref(), now)
    })
    .map(Json)
    .into_response()
}

async fn submit(State(state): State<AppState>, Json(body): Json<SubmitRequest>) -> Response {
    with_experiment(&state, |exp, now| exp.submit(&body, now))
        .map(Json)
        .into_response()
}

async fn status(State(state): State<AppState>) -> Response {
    with_experiment(&state, |exp, now| {
        exp.sweep(now)?;
        Ok(exp.status())
    })
    .map(Json)
    .into_response()
}

async fn results(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let res = state.require_admin(&headers).and_then(|()| {
        with_experiment(&state, |exp, now| {
            exp.sweep(now)?;
            Ok(exp.results())
        })
    });
    res.map(Json).into_response()
}

async fn export(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let res = state
        .require_admin(&headers)
        .and_then(|()| with_experiment(&state, |exp, _| exp.export()));
    match res {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Serialize)]
struct LoadResponse {
    experiment_id: String,
    log: String,
    last_seq: u64,
}

fn load_response(exp: &Experiment) -> LoadResponse {
    LoadResponse {
        experiment_id: exp.config().experiment_id.clone(),
        log: exp.log_path().display().to_string(),
        last_seq: exp.last_seq(),
    }
}

fn resolve_log(data_dir: &Path, config: &ExperimentConfig) -> PathBuf {
    let path = config.log_path();
    if path.is_relative() {
        data_dir.join(path)
    } else {
        path
    }
}

/// Body: the experiment configuration as TOML. An existing log for the same
/// experiment is recovered.
async fn admin_load(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let res = state.require_admin(&headers).and_then(|()| {
        let text = std::str::from_utf8(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let config =
            ExperimentConfig::parse(text).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let log = resolve_log(&state.data_dir, &config);
        let now = state.now();
        let mut inner = state.lock();
        inner.experiment = None;
        let exp =
            Experiment::open(config, &log, now).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let resp = load_response(&exp);
        inner.experiment = Some(exp);
        Ok(resp)
    });
    res.map(Json).into_response()
}

/// Archives the current log and restarts the experiment from an empty one.
async fn admin_reset(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let res = state.require_admin(&headers).and_then(|()| {
        let now = state.now();
        let mut inner = state.lock();
        let exp = inner.experiment.take().ok_or(ApiError::NotLoaded)?;
        let config = exp.config().clone();
        let log = exp.log_path().to_owned();
        drop(exp);
        let archived = log.with_extension(format!("{now}.jsonl"));
        if log.exists() {
            std::fs::rename(&log, &archived).map_err(|e| ApiError::Storage(e.to_string()))?;
        }
        let exp =
            Experiment::open(config, &log, now).map_err(|e| ApiError::Storage(e.to_string()))?;
        let resp = load_response(&exp);
        inner.experiment = Some(exp);
        Ok(resp)
    });
    res.map(Json).into_response()
}

pub fn router(experiment: Option<Experiment>, options: ServerOptions) -> Router {
    let state = AppState {
        inner: Arc::new(Mutex::new(Inner { experiment })),
        admin_token: options.admin_token.map(Into::into),
        data_dir: options.data_dir.into(),
        clock: options.clock,
    };
    let mut app = Router::new()
        .route("/api/join", post(join))
        .route("/api/submit", post(submit))
        .route("/api/status", get(status))
        .route("/api/results", get(results))
        .route("/api/export", get(export))
        .route("/api/admin/load", post(admin_load))
        .route("/api/admin/reset", post(admin_reset));
    if let Some(media) = options.media_root {
        app = app.nest_service("/media", ServeDir::new(media));
    }
    if let Some(ui) = options.ui_dir {
        app = app.fallback_service(ServeDir::new(ui));
    }
    app.with_state(state)
}
