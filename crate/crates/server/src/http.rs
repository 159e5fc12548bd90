//! JSON-over-HTTP API.
//!
//! Clients send session and pipeline documents only. Commands are always
//! re-planned here from the registered descriptors.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pline_core::pipeline::{import_pipeline_json, ImportOptions, PipelineError};
use pline_core::spec::canonical_json;
use pline_core::synth::{render_preview, synthesize};
use pline_core::{import_session_json, resolve, SessionError};
use serde_json::{json, Value as JsonValue};
use tower_http::services::ServeDir;

use crate::manager::{ControlError, JobManager, SubmitError, Upload, UploadSource};

/// Bytes of each log shown in job status responses.
pub const LOG_TAIL_BYTES: usize = 4096;

#[derive(Clone)]
pub struct AppState {
    pub manager: JobManager,
    pub max_upload_bytes: u64,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    errors: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            errors: Vec::new(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"code": self.code, "error": self.message});
        if !self.errors.is_empty() {
            body["errors"] = json!(self.errors);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        let (status, code) = match e {
            ControlError::NotFound(_) => (StatusCode::NOT_FOUND, "NOT_FOUND"),
            ControlError::Illegal { .. } => (StatusCode::CONFLICT, "ILLEGAL_TRANSITION"),
            ControlError::Unsupported => (StatusCode::NOT_IMPLEMENTED, "UNSUPPORTED"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let limit = usize::try_from(state.max_upload_bytes).unwrap_or(usize::MAX).saturating_add(1 << 20);
    let api = Router::new()
        .route("/api/plugins", get(list_plugins))
        .route("/api/plugins/{id}", get(get_plugin))
        .route("/api/plugins/{id}/resolve", post(resolve_plugin))
        .route("/api/jobs", get(list_jobs).post(submit_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/pause", post(pause_job))
        .route("/api/jobs/{id}/resume", post(resume_job))
        .route("/api/jobs/{id}/cancel", post(cancel_job))
        .route("/api/jobs/{id}/files", get(list_files))
        .route("/api/jobs/{id}/files/{*name}", get(get_file))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn list_plugins(State(st): State<AppState>) -> Json<JsonValue> {
    let list: Vec<JsonValue> = st
        .manager
        .registry()
        .plugins
        .values()
        .map(|p| json!({"id": p.spec.id, "name": p.spec.name, "desc": p.spec.desc, "version": p.spec.version}))
        .collect();
    Json(JsonValue::Array(list))
}

async fn get_plugin(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JsonValue>> {
    let p = st
        .manager
        .registry()
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_PLUGIN", format!("unknown plugin '{id}'")))?;
    Ok(Json(canonical_json(&p.spec)))
}

async fn resolve_plugin(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<JsonValue>> {
    let reg = st.manager.registry();
    let p = reg
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_PLUGIN", format!("unknown plugin '{id}'")))?;
    let mut doc: JsonValue = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "SYNTAX", format!("malformed session document: {e}")))?;
    // A bare `{values}` body is taken as a session for this plugin.
    if let Some(o) = doc.as_object_mut() {
        if !o.contains_key("plugin_id") {
            o.insert("plugin_id".into(), json!(p.spec.id));
            o.entry("plugin_version").or_insert(json!(p.spec.version));
        }
    }
    let state = import_session_json(&p.spec, &doc).map_err(|e| match e {
        SessionError::SpecMismatch { .. } => ApiError::new(StatusCode::CONFLICT, "SPEC_MISMATCH", e.to_string()),
        other => ApiError::new(StatusCode::BAD_REQUEST, "INVALID_SESSION", other.to_string()),
    })?;
    let resolved = resolve(&p.spec, &state);
    let mut out = serde_json::to_value(&resolved).expect("serializable");
    out["preview"] = match synthesize(&p.spec, &resolved) {
        Ok(plan) => json!(render_preview(&plan)),
        Err(_) => JsonValue::Null,
    };
    out["active_preset"] = json!(state.active_preset);
    Ok(Json(out))
}

async fn submit_job(State(st): State<AppState>, mut multipart: Multipart) -> ApiResult<(StatusCode, Json<JsonValue>)> {
    let too_large = |what: &str| {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "UPLOAD_TOO_LARGE",
            format!("{what} exceeds the {} byte limit", st.max_upload_bytes),
        )
    };
    let mut pipeline_doc = None;
    let mut uploads = Vec::new();
    let mut total: u64 = 0;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => return Err(too_large("request")),
            Err(e) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "SYNTAX", e.body_text())),
        };
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let data = match field.bytes().await {
            Ok(d) => d,
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => return Err(too_large("request")),
            Err(e) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "SYNTAX", e.body_text())),
        };
        if name == "pipeline" && pipeline_doc.is_none() {
            pipeline_doc = Some(data);
            continue;
        }
        total += data.len() as u64;
        if total > st.max_upload_bytes {
            return Err(too_large("upload"));
        }
        uploads.push(Upload {
            name: file_name.unwrap_or(name),
            source: UploadSource::Bytes(data.to_vec()),
        });
    }
    let doc = pipeline_doc.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "SYNTAX", "missing 'pipeline' field"))?;
    let doc: JsonValue = serde_json::from_slice(&doc)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "SYNTAX", format!("malformed pipeline document: {e}")))?;
    let pipeline = import_pipeline_json(&doc, &**st.manager.registry(), ImportOptions::default()).map_err(|e| {
        let (status, code) = match &e {
            PipelineError::UnknownPlugin(_) => (StatusCode::NOT_FOUND, "UNKNOWN_PLUGIN"),
            PipelineError::VersionMismatch { .. } => (StatusCode::CONFLICT, "VERSION_MISMATCH"),
            PipelineError::Session { source: SessionError::SpecMismatch { .. }, .. } => (StatusCode::CONFLICT, "SPEC_MISMATCH"),
            _ => (StatusCode::BAD_REQUEST, "INVALID_PIPELINE"),
        };
        ApiError::new(status, code, e.to_string())
    })?;
    let mgr = st.manager.clone();
    let res = tokio::task::spawn_blocking(move || mgr.submit(&pipeline, uploads))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?;
    match res {
        Ok(id) => Ok((StatusCode::ACCEPTED, Json(json!({"id": id})))),
        Err(e @ SubmitError::Io(_)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "IO", e.to_string())),
        Err(e) => {
            let code = match e {
                SubmitError::Plan(_) => "NOT_READY",
                _ => "INVALID_UPLOAD",
            };
            let mut err = ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string());
            err.errors = e.messages();
            Err(err)
        }
    }
}

async fn list_jobs(State(st): State<AppState>) -> Json<JsonValue> {
    Json(serde_json::to_value(st.manager.list()).expect("serializable"))
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JsonValue>> {
    let status = st.manager.status(&id)?;
    let tails = st.manager.log_tails(&id, LOG_TAIL_BYTES)?;
    let mut out = serde_json::to_value(&status).expect("serializable");
    if let Some(steps) = out["steps"].as_array_mut() {
        for (s, (o, e)) in steps.iter_mut().zip(tails) {
            s["stdout_tail"] = json!(o);
            s["stderr_tail"] = json!(e);
        }
    }
    Ok(Json(out))
}

async fn control(st: AppState, id: String, f: fn(&JobManager, &str) -> Result<crate::job::JobStatus, ControlError>) -> ApiResult<Json<JsonValue>> {
    let mgr = st.manager.clone();
    let status = tokio::task::spawn_blocking(move || f(&mgr, &id))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))??;
    Ok(Json(serde_json::to_value(status).expect("serializable")))
}

async fn pause_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JsonValue>> {
    control(st, id, JobManager::pause).await
}

async fn resume_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JsonValue>> {
    control(st, id, JobManager::resume).await
}

async fn cancel_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JsonValue>> {
    control(st, id, JobManager::cancel).await
}

async fn list_files(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JsonValue>> {
    Ok(Json(serde_json::to_value(st.manager.files(&id)?).expect("serializable")))
}

async fn get_file(State(st): State<AppState>, Path((id, name)): Path<(String, String)>) -> ApiResult<Response> {
    let path = st
        .manager
        .file_path(&id, &name)?
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no file '{name}'")))?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "IO", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, static_dir)).with_graceful_shutdown(shutdown).await
}

/// Loads plugins and recovers jobs for a config.
pub fn build_state(cfg: &crate::config::ServerConfig) -> std::io::Result<AppState> {
    let registry = Arc::new(crate::registry::Registry::load(&cfg.plugin_dir));
    for d in &registry.diagnostics {
        tracing::warn!("{d}");
    }
    let opts = crate::manager::ManagerOptions::new(&cfg.work_dir, cfg.max_jobs);
    Ok(AppState {
        manager: JobManager::open(registry, opts)?,
        max_upload_bytes: cfg.max_upload_bytes,
    })
}
