//! HTTP+JSON front end. All mutations of a session go through one lock, so
//! guesses, bot ticks and phase changes see a consistent snapshot.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::config::GameConfig;
use crate::error::GameError;
use crate::export::export_session;
use crate::session::Session;

pub struct AppState {
    sessions: Mutex<HashMap<String, Session>>,
    clock: Arc<dyn Clock>,
    defaults: GameConfig,
    base_seed: u64,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(clock: Arc<dyn Clock>, defaults: GameConfig, base_seed: u64) -> Arc<Self> {
        Arc::new(AppState {
            sessions: Mutex::new(HashMap::new()),
            clock,
            defaults,
            base_seed,
            next_id: AtomicU64::new(1),
        })
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session, f64) -> Result<T, GameError>) -> Result<T, GameError> {
        let mut sessions = self.sessions.lock().expect("session lock poisoned");
        let session = sessions.get_mut(id).ok_or_else(|| GameError::UnknownSession(id.into()))?;
        f(session, self.clock.now())
    }
}

impl IntoResponse for GameError {
    fn into_response(self) -> Response {
        let status = match &self {
            GameError::UnknownSession(_) | GameError::UnknownPlayer(_) => StatusCode::NOT_FOUND,
            GameError::OutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            GameError::SessionOver | GameError::AlreadyStarted | GameError::NotFinished => StatusCode::CONFLICT,
            GameError::BadRequest(_) => StatusCode::BAD_REQUEST,
            GameError::Model(_) | GameError::Csv(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub seed: Option<u64>,
    pub config: Option<GameConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Joined {
    pub player_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GuessRequest {
    pub player_id: String,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
pub struct StateQuery {
    pub player: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/players", post(join))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/guess", post(guess))
        .route("/sessions/{id}/state", get(view))
        .route("/sessions/{id}/export.csv", get(export_csv))
        .route("/sessions/{id}/export.json", get(export_meta))
        .with_state(state)
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, GameError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| GameError::BadRequest(e.to_string()))?
    };
    let n = app.next_id.fetch_add(1, Ordering::SeqCst);
    let id = format!("s{n}");
    let seed = req.seed.unwrap_or(app.base_seed.wrapping_add(n));
    let session = Session::new(id.clone(), req.config.unwrap_or_else(|| app.defaults.clone()), seed, app.clock.now())?;
    app.sessions.lock().expect("session lock poisoned").insert(id.clone(), session);
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn join(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Joined>, GameError> {
    let player_id = app.with_session(&id, |s, now| s.add_player(now))?;
    Ok(Json(Joined { player_id }))
}

async fn start(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, GameError> {
    let phase = app.with_session(&id, |s, now| {
        s.start(now)?;
        Ok(s.phase())
    })?;
    Ok(Json(serde_json::json!({ "phase": phase })))
}

async fn guess(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, GameError> {
    let req: GuessRequest = serde_json::from_slice(&body).map_err(|e| GameError::BadRequest(e.to_string()))?;
    let out = app.with_session(&id, |s, now| s.submit_guess(&req.player_id, req.value, now))?;
    Ok(Json(out))
}

async fn view(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<StateQuery>,
) -> Result<impl IntoResponse, GameError> {
    Ok(Json(app.with_session(&id, |s, now| s.view(&q.player, now))?))
}

async fn export_csv(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, GameError> {
    let export = app.with_session(&id, |s, now| {
        s.advance_to(now)?;
        export_session(s)
    })?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], export.csv))
}

async fn export_meta(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, GameError> {
    let export = app.with_session(&id, |s, now| {
        s.advance_to(now)?;
        export_session(s)
    })?;
    Ok(Json(export.meta))
}
