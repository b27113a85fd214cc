//! HTTP access to stored run documents for inspection and correction.
//!
//! Runs live as `<id>.json` files in a state directory. Reads go straight to
//! disk; every mutation takes the run's lock, bumps its revision and
//! rewrites the file atomically before answering with the new document.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bonsai_core::backends::Backends;
use bonsai_core::run::{EditError, RunDocument};
use bonsai_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::commands::write_atomic;
use crate::setup::Setup;

/// How `rescore` obtains backends.
#[derive(Clone)]
pub enum BackendSource {
    /// Resolve each run's configured backend names.
    Registry(Box<Setup>),
    Fixed(Backends),
}

pub struct AppState {
    dir: PathBuf,
    backends: BackendSource,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(dir: impl Into<PathBuf>, backends: BackendSource) -> Arc<Self> {
        Arc::new(AppState {
            dir: dir.into(),
            backends,
            locks: Mutex::new(HashMap::new()),
        })
    }

    fn path(&self, id: &str) -> Result<PathBuf, ApiError> {
        let valid = !id.is_empty()
            && !id.starts_with('.')
            && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !valid {
            return Err(ApiError::not_found(format!("no run `{id}`")));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn load(&self, id: &str) -> Result<RunDocument, ApiError> {
        let path = self.path(id)?;
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ApiError::not_found(format!("no run `{id}`")))
            }
            Err(e) => return Err(ApiError::internal(format!("{}: {e}", path.display()))),
        };
        RunDocument::from_json(&text).map_err(|e| ApiError::internal(e.to_string()))
    }

    fn save(&self, id: &str, doc: &RunDocument) -> Result<(), ApiError> {
        write_atomic(&self.path(id)?, &doc.to_json()).map_err(|e| ApiError::internal(e.to_string()))
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn backends_for(&self, doc: &RunDocument) -> Result<Backends, ApiError> {
        match &self.backends {
            BackendSource::Fixed(b) => Ok(b.clone()),
            BackendSource::Registry(setup) => setup
                .backends_for(doc.config())
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: String) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        let status = match e {
            EditError::UnknownNode(_) => StatusCode::NOT_FOUND,
            EditError::NotALeaf(_) | EditError::ScoreOutOfRange(_) => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Backend { .. } | Error::Parse { .. } => StatusCode::BAD_GATEWAY,
            Error::Stage { ref source, .. } if matches!(**source, Error::Backend { .. } | Error::Parse { .. }) => {
                StatusCode::BAD_GATEWAY
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub id: String,
    pub kind: String,
    pub revision: u64,
    pub title: String,
}

async fn list_runs(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<RunSummary>>> {
    let entries = std::fs::read_dir(&state.dir)
        .map_err(|e| ApiError::internal(format!("{}: {e}", state.dir.display())))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".json")
                .filter(|stem| !stem.starts_with('.'))
                .map(str::to_string)
        })
        .collect();
    ids.sort();
    let mut runs = Vec::new();
    for id in ids {
        let Ok(doc) = state.load(&id) else {
            tracing::warn!(run = %id, "skipping unreadable run document");
            continue;
        };
        let (kind, title) = match &doc {
            RunDocument::Tree(r) => ("tree", r.tree.claim.text.clone()),
            RunDocument::Mcq(r) => ("mcq", r.question.clone()),
        };
        runs.push(RunSummary {
            id,
            kind: kind.into(),
            revision: doc.revision(),
            title,
        });
    }
    Ok(Json(runs))
}

async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<RunDocument>> {
    Ok(Json(state.load(&id)?))
}

/// Optional `revision` in a mutation body; a mismatch means the client's
/// copy is stale.
#[derive(Debug, Default, Deserialize)]
struct Expect {
    #[serde(default)]
    revision: Option<u64>,
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes, required: bool) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) && !required {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad request body: {e}")))
}

/// Takes the run's lock and loads it, checking the expected revision.
async fn checkout(
    state: &AppState,
    id: &str,
    expected: Option<u64>,
) -> ApiResult<(tokio::sync::OwnedMutexGuard<()>, RunDocument)> {
    let guard = state.lock_for(id).lock_owned().await;
    let doc = state.load(id)?;
    if let Some(rev) = expected {
        if rev != doc.revision() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("run `{id}` is at revision {}, not {rev}", doc.revision()),
            ));
        }
    }
    Ok((guard, doc))
}

fn commit(state: &AppState, id: &str, mut doc: RunDocument) -> ApiResult<Json<RunDocument>> {
    doc.bump_revision();
    state.save(id, &doc)?;
    Ok(Json(doc))
}

#[derive(Debug, Default, Deserialize)]
struct ScoreBody {
    score: f64,
    #[serde(flatten)]
    expect: Expect,
}

async fn set_score(
    State(state): State<Arc<AppState>>,
    Path((id, leaf)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<RunDocument>> {
    let body: ScoreBody = parse_body(&body, true)?;
    let (_guard, mut doc) = checkout(&state, &id, body.expect.revision).await?;
    doc.set_leaf_score(&leaf, body.score)?;
    commit(&state, &id, doc)
}

#[derive(Debug, Default, Deserialize)]
struct PruneBody {
    pruned: bool,
    #[serde(flatten)]
    expect: Expect,
}

async fn set_pruned(
    State(state): State<Arc<AppState>>,
    Path((id, node)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<RunDocument>> {
    let body: PruneBody = parse_body(&body, true)?;
    let (_guard, mut doc) = checkout(&state, &id, body.expect.revision).await?;
    doc.set_pruned(&node, body.pruned)?;
    commit(&state, &id, doc)
}

async fn repropagate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<RunDocument>> {
    let expect: Expect = parse_body(&body, false)?;
    let (_guard, mut doc) = checkout(&state, &id, expect.revision).await?;
    doc.repropagate()?;
    commit(&state, &id, doc)
}

async fn rescore(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<RunDocument>> {
    let expect: Expect = parse_body(&body, false)?;
    let (_guard, mut doc) = checkout(&state, &id, expect.revision).await?;
    let backends = state.backends_for(&doc)?;
    doc.rescore(&backends).await?;
    commit(&state, &id, doc)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/leaves/{leaf}/score", post(set_score))
        .route("/runs/{id}/nodes/{node}/prune", post(set_pruned))
        .route("/runs/{id}/repropagate", post(repropagate))
        .route("/runs/{id}/rescore", post(rescore))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(address: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(address).await?;
    tracing::info!(address = %listener.local_addr()?, "serving runs");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
