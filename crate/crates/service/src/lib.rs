//! HTTP JSON API over in-memory reasoning sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"metadata": {...}}` | 201 `{"session_id"}` |
//! | GET | `/sessions/{id}` | | state document |
//! | DELETE | `/sessions/{id}` | | 204 |
//! | POST | `/sessions/{id}/models` | tree document | 201 `{"model_id"}` |
//! | POST | `/sessions/{id}/instances` | `{"name","model_id","label","minconf"?}` | 201 declaration |
//! | POST | `/sessions/{id}/constraints` | `{"text"}` | 201 `{"constraint_id"}` |
//! | DELETE | `/sessions/{id}/constraints/{cid}` | | 204 |
//! | POST | `/sessions/{id}/undo` | | 200 removed constraint |
//! | POST | `/sessions/{id}/reset` | | 204 |
//! | POST | `/sessions/{id}/solve` | `{"project"?,"minimize"?}` | 200 answer |
//! | GET | `/sessions/{id}/script` | | replayable script |
//!
//! Errors are `{"kind","message","line","column"}` with status 404 for
//! unknown sessions or constraints, 409 for duplicate declarations and 400
//! otherwise.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use dtreason_core::session::{parse_minconf, Session, SessionError, SolveOptions};

#[derive(Clone, Debug)]
pub struct Config {
    /// Wall-clock limit of one solve request.
    pub budget: Duration,
    /// Sessions untouched for this long are dropped.
    pub idle_expiry: Duration,
    /// Answer cross-origin requests from any origin.
    pub cors: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            budget: Duration::from_secs(60),
            idle_expiry: Duration::from_secs(3600),
            cors: false,
        }
    }
}

struct Slot {
    session: Session,
    touched: Instant,
}

#[derive(Clone)]
pub struct AppState {
    config: Config,
    sessions: Arc<Mutex<HashMap<String, Slot>>>,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        AppState {
            config,
            sessions: Arc::default(),
        }
    }

    fn store(&self) -> std::sync::MutexGuard<'_, HashMap<String, Slot>> {
        let mut map = self.sessions.lock().expect("session store poisoned");
        let expiry = self.config.idle_expiry;
        map.retain(|_, s| s.touched.elapsed() < expiry);
        map
    }

    /// Runs `f` on a live session, expiring idle ones first.
    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut map = self.store();
        let now = Instant::now();
        let slot = map.get_mut(id).ok_or_else(|| ApiError::unknown_session(id))?;
        slot.touched = now;
        f(&mut slot.session)
    }

    pub fn session_count(&self) -> usize {
        self.store().len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: String) -> Self {
        ApiError {
            status,
            body: json!({"kind": kind, "message": message, "line": null, "column": null}),
        }
    }

    fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = if e.is_conflict() {
            StatusCode::CONFLICT
        } else if matches!(e, SessionError::UnknownConstraint(_)) {
            StatusCode::NOT_FOUND
        } else {
            StatusCode::BAD_REQUEST
        };
        let mut err = ApiError::new(status, e.kind(), e.to_string());
        if let Some(p) = e.pos() {
            err.body["line"] = json!(p.line);
            err.body["column"] = json!(p.column);
        }
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    metadata: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceBody {
    name: String,
    model_id: String,
    label: String,
    minconf: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintBody {
    text: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolveBody {
    project: Option<Vec<String>>,
    minimize: Option<String>,
}

pub fn router(state: AppState) -> Router {
    let cors = state.config.cors;
    let app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/models", post(add_model))
        .route("/sessions/{id}/instances", post(add_instance))
        .route("/sessions/{id}/constraints", post(add_constraint))
        .route("/sessions/{id}/constraints/{cid}", delete(retract_constraint))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/solve", post(solve))
        .route("/sessions/{id}/script", get(script))
        .with_state(state);
    if cors {
        app.layer(tower_http::cors::CorsLayer::permissive())
    } else {
        app
    }
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(body) = body?;
    let session = match body.metadata {
        Some(meta) => Session::from_metadata_json(&meta.to_string())?,
        None => Session::default(),
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    state.store().insert(
        id.clone(),
        Slot {
            session,
            touched: Instant::now(),
        },
    );
    log::debug!("created session {id}");
    Ok((StatusCode::CREATED, Json(json!({"session_id": id}))))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    state.with(&id, |s| Ok(Json(s.state_json())))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match state.store().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::unknown_session(&id)),
    }
}

async fn add_model(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(doc) = body?;
    let model_id = state.with(&id, |s| Ok(s.declare_model_json(&doc.to_string())?))?;
    Ok((StatusCode::CREATED, Json(json!({"model_id": model_id}))))
}

async fn add_instance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<InstanceBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(b) = body?;
    let minconf = match &b.minconf {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(parse_minconf(s)?),
        Some(other) => Some(parse_minconf(&other.to_string())?),
    };
    let decl = state.with(&id, |s| {
        s.declare_instance(&b.name, &b.model_id, &b.label, minconf)?;
        Ok(s.instances().last().cloned())
    })?;
    Ok((StatusCode::CREATED, Json(json!(decl))))
}

async fn add_constraint(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ConstraintBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(b) = body?;
    let cid = state.with(&id, |s| Ok(s.add_constraint(&b.text)?))?;
    Ok((StatusCode::CREATED, Json(json!({"constraint_id": cid}))))
}

async fn retract_constraint(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, u64)>,
) -> ApiResult<StatusCode> {
    state.with(&id, |s| Ok(s.retract_constraint(cid)?))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let removed = state.with(&id, |s| Ok(s.undo()?))?;
    Ok(Json(json!(removed)))
}

async fn reset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    state.with(&id, |s| {
        s.reset();
        Ok(())
    })?;
    Ok(StatusCode::NO_CONTENT)
}

async fn solve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<SolveBody>>,
) -> ApiResult<Response> {
    let b = body.map(|Json(b)| b).unwrap_or_default();
    let opts = SolveOptions {
        project: b.project,
        minimize: b.minimize,
    };
    // Solve on a snapshot so other requests are not blocked meanwhile.
    let snapshot = state.with(&id, |s| Ok(s.clone()))?;
    let deadline = Instant::now() + state.config.budget;
    let answer = tokio::task::spawn_blocking(move || snapshot.solve_within(&opts, Some(deadline)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let body = answer.to_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn script(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = state.with(&id, |s| Ok(s.export_script()))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}
