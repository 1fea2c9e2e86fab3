//! JSON-over-HTTP API over contests and audit sessions.
//!
//! Each session carries a revision that starts at 1 when the session is
//! created and grows by one per accepted ballot. Trajectory rows for time `t`
//! were produced at revision `t + 1`, so `GET /sessions/{id}/state?since_revision=r`
//! returns exactly the rows a client holding revision `r` has not seen.
//! When `r` is current and `wait_ms` is set, the request waits up to that
//! long for the next ballot.
//!
//! With a data directory, contests and every session snapshot are written
//! there (write to a temporary file, then rename) and reloaded at startup.

use crate::dataio::{export_trajectories, parse_contests, trajectory_header, DataError};
use crate::engine::{
    AuditSession, CertificationReport, EngineError, Mode, SessionConfig, StrategyKind,
    TrajectoryRow,
};
use crate::population::ContestResult;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use tokio::sync::{watch, Mutex, RwLock};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const API_VERSION: u32 = 1;
/// Upper limit on long-poll waits.
pub const MAX_WAIT_MS: u64 = 60_000;

/// An error response: status plus JSON body `{"error": ..., ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        let line = match &e {
            DataError::Csv { line, .. } | DataError::Row { line, .. } => Some(*line),
            DataError::Contest { line, .. } => Some(*line),
            _ => None,
        };
        let err = ApiError::new(StatusCode::BAD_REQUEST, e.to_string());
        match line {
            Some(l) => err.with("line", json!(l)),
            None => err,
        }
    }
}

fn ballot_error(e: EngineError) -> ApiError {
    match e {
        EngineError::InvalidVote { ref valid, .. } => {
            let valid = json!(valid);
            ApiError::new(StatusCode::BAD_REQUEST, e.to_string()).with("valid_votes", valid)
        }
        EngineError::NotPending { ref pending, .. } => {
            let pending = json!(pending);
            ApiError::new(StatusCode::CONFLICT, e.to_string()).with("pending_ballot", pending)
        }
        EngineError::AlreadyRecorded(_) | EngineError::UnknownBallot(_) => {
            ApiError::new(StatusCode::CONFLICT, e.to_string())
        }
        EngineError::Exhausted => ApiError::new(StatusCode::CONFLICT, e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct SessionResource {
    session: AuditSession,
    revision: u64,
    created_at: u64,
    updated_at: u64,
}

struct SessionSlot {
    resource: Mutex<SessionResource>,
    revision_tx: watch::Sender<u64>,
}

#[derive(Serialize, Deserialize)]
struct StoredSession {
    session_id: String,
    created_at: u64,
    updated_at: u64,
    snapshot: Value,
}

/// Shared server state.
pub struct AppState {
    contests: RwLock<BTreeMap<String, ContestResult>>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    data_dir: Option<PathBuf>,
}

fn write_atomic(path: &FsPath, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(tmp, path)
}

impl AppState {
    /// In-memory state seeded with `contests`.
    pub fn new(contests: Vec<ContestResult>) -> Self {
        Self {
            contests: RwLock::new(
                contests
                    .into_iter()
                    .map(|c| (c.contest_id.clone(), c))
                    .collect(),
            ),
            sessions: RwLock::new(HashMap::new()),
            data_dir: None,
        }
    }

    /// State persisted under `dir`. Contests and sessions found there are
    /// loaded; `contests` are added on top.
    pub fn with_data_dir(
        contests: Vec<ContestResult>,
        dir: impl Into<PathBuf>,
    ) -> Result<Self, String> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("sessions")).map_err(|e| e.to_string())?;
        let mut all = BTreeMap::new();
        let stored = dir.join("contests.csv");
        if stored.exists() {
            let text = std::fs::read_to_string(&stored).map_err(|e| e.to_string())?;
            for c in parse_contests(&text).map_err(|e| e.to_string())?.contests {
                all.insert(c.contest_id.clone(), c);
            }
        }
        for c in contests {
            all.insert(c.contest_id.clone(), c);
        }
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(dir.join("sessions")).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
            let stored: StoredSession =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let session = AuditSession::restore(&stored.snapshot.to_string())
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let revision = session.ballots_recorded() + 1;
            sessions.insert(
                stored.session_id,
                Arc::new(SessionSlot {
                    resource: Mutex::new(SessionResource {
                        session,
                        revision,
                        created_at: stored.created_at,
                        updated_at: stored.updated_at,
                    }),
                    revision_tx: watch::channel(revision).0,
                }),
            );
        }
        let state = Self {
            contests: RwLock::new(all),
            sessions: RwLock::new(sessions),
            data_dir: Some(dir),
        };
        state.persist_contests_blocking()?;
        Ok(state)
    }

    fn persist_contests_blocking(&self) -> Result<(), String> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        let contests = self.contests.try_read().map_err(|e| e.to_string())?;
        let list: Vec<ContestResult> = contests.values().cloned().collect();
        write_atomic(
            &dir.join("contests.csv"),
            &crate::dataio::contests_to_csv(&list),
        )
        .map_err(|e| e.to_string())
    }

    fn persist_session(&self, id: &str, r: &SessionResource) -> Result<(), ApiError> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        let snapshot: Value =
            serde_json::from_str(&r.session.snapshot()).expect("snapshot is JSON");
        let stored = StoredSession {
            session_id: id.to_string(),
            created_at: r.created_at,
            updated_at: r.updated_at,
            snapshot,
        };
        write_atomic(
            &dir.join("sessions").join(format!("{id}.json")),
            &serde_json::to_string(&stored).expect("serialises"),
        )
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    }

    async fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

/// Builds the router. `cors_origin` restricts cross-origin access to one
/// origin; `None` allows any.
pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);
    Router::new()
        .route("/health", get(health))
        .route("/contests", get(list_contests).post(ingest_contests))
        .route("/contests/{id}", get(get_contest))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}/ballots", post(post_ballot))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/export", get(export_csv))
        .route("/sessions/{id}/snapshot", get(get_snapshot))
        .layer(cors)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(
    addr: std::net::SocketAddr,
    state: Arc<AppState>,
    cors_origin: Option<String>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, cors_origin.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "api_version": API_VERSION }))
}

async fn list_contests(State(state): State<Arc<AppState>>) -> Json<Value> {
    let contests = state.contests.read().await;
    Json(json!({ "contests": contests.values().collect::<Vec<_>>() }))
}

async fn get_contest(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ContestResult>, ApiError> {
    state
        .contests
        .read()
        .await
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("contest", &id))
}

/// Body: contest CSV. Contests with an existing id are replaced.
async fn ingest_contests(
    State(state): State<Arc<AppState>>,
    body: String,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let load = parse_contests(&body)?;
    let ids: Vec<String> = load.contests.iter().map(|c| c.contest_id.clone()).collect();
    {
        let mut contests = state.contests.write().await;
        for c in load.contests {
            contests.insert(c.contest_id.clone(), c);
        }
        if let Some(dir) = &state.data_dir {
            let list: Vec<ContestResult> = contests.values().cloned().collect();
            write_atomic(
                &dir.join("contests.csv"),
                &crate::dataio::contests_to_csv(&list),
            )
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        }
    }
    Ok((
        StatusCode::CREATED,
        Json(json!({ "added": ids, "warnings": load.warnings })),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    contest_id: String,
    alpha: f64,
    strategy: String,
    #[serde(default)]
    mode: Option<String>,
    seed: u64,
    #[serde(default)]
    winners: Option<Vec<String>>,
    #[serde(default)]
    extra_nulls: Vec<f64>,
    #[serde(default)]
    grid_size: Option<usize>,
    #[serde(default)]
    beta: Option<f64>,
}

fn unprocessable(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
}

/// Response body shared by session creation, ballot posts and state reads.
#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    api_version: u32,
    contest_id: String,
    config: SessionConfig,
    revision: u64,
    created_at: u64,
    updated_at: u64,
    /// Ballot to retrieve next, `None` once every ballot has been drawn.
    next_ballot: Option<String>,
    exhausted: bool,
    vote_tokens: Vec<String>,
    status: CertificationReport,
    columns: Vec<String>,
    /// Trajectory rows newer than the requested revision.
    rows: Vec<TrajectoryRow>,
}

fn view(id: &str, r: &SessionResource, since_revision: u64) -> SessionView {
    let s = &r.session;
    let k = s.assertion_labels().len();
    let first_t = since_revision.min(s.ballots_recorded() + 1) as usize;
    SessionView {
        session_id: id.to_string(),
        api_version: API_VERSION,
        contest_id: s.contest().contest_id.clone(),
        config: s.config().clone(),
        revision: r.revision,
        created_at: r.created_at,
        updated_at: r.updated_at,
        next_ballot: s.pending().map(str::to_string),
        exhausted: s.pending().is_none() && s.is_exhausted(),
        vote_tokens: s.vote_tokens(),
        status: s.status(),
        columns: trajectory_header(s),
        rows: s.trajectory()[(first_t * k).min(s.trajectory().len())..].to_vec(),
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: String,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req: CreateSession =
        serde_json::from_str(&body).map_err(|e| unprocessable(e.to_string()))?;
    let contest = state
        .contests
        .read()
        .await
        .get(&req.contest_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("contest", &req.contest_id))?;
    let strategy: StrategyKind = req.strategy.parse().map_err(unprocessable)?;
    let mode: Mode = match &req.mode {
        Some(m) => m.parse().map_err(unprocessable)?,
        None => Mode::Rla,
    };
    let mut config = SessionConfig::new(req.alpha, strategy, mode, req.seed);
    config.winners = req.winners;
    config.extra_nulls = req.extra_nulls;
    if let Some(g) = req.grid_size {
        config.grid_size = g;
    }
    if let Some(b) = req.beta {
        config.beta = b;
    }
    let mut session =
        AuditSession::create(contest, config).map_err(|e| unprocessable(e.to_string()))?;
    // A one-ballot contest can only be exhausted after a draw, so this succeeds.
    session
        .draw_next()
        .map_err(|e| unprocessable(e.to_string()))?;

    let id = uuid::Uuid::new_v4().to_string();
    let now = now_ms();
    let resource = SessionResource {
        session,
        revision: 1,
        created_at: now,
        updated_at: now,
    };
    state.persist_session(&id, &resource)?;
    let body = view(&id, &resource, 0);
    state.sessions.write().await.insert(
        id,
        Arc::new(SessionSlot {
            resource: Mutex::new(resource),
            revision_tx: watch::channel(1).0,
        }),
    );
    Ok((StatusCode::CREATED, Json(body)))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let mut ids: Vec<String> = state.sessions.read().await.keys().cloned().collect();
    ids.sort();
    Json(json!({ "sessions": ids }))
}

#[derive(Debug, Deserialize)]
struct BallotPost {
    ballot_id: String,
    vote: String,
    /// Revision the client last saw; rejected with 409 if stale.
    #[serde(default)]
    revision: Option<u64>,
}

async fn post_ballot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id).await?;
    let post: BallotPost = serde_json::from_str(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let mut r = slot.resource.lock().await;
    if let Some(rev) = post.revision {
        if rev != r.revision {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("stale revision {rev}; current revision is {}", r.revision),
            )
            .with("revision", json!(r.revision)));
        }
    }
    let before = r.revision;
    r.session
        .record_ballot(&post.ballot_id, &post.vote)
        .map_err(ballot_error)?;
    match r.session.draw_next() {
        Ok(_) | Err(EngineError::Exhausted) => {}
        Err(e) => return Err(ballot_error(e)),
    }
    r.revision += 1;
    r.updated_at = now_ms();
    state.persist_session(&id, &r)?;
    let _ = slot.revision_tx.send(r.revision);
    Ok(Json(view(&id, &r, before)))
}

#[derive(Debug, Deserialize)]
struct StateQuery {
    #[serde(default)]
    since_revision: u64,
    #[serde(default)]
    wait_ms: u64,
}

async fn get_state(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<StateQuery>,
) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id).await?;
    if q.wait_ms > 0 {
        let mut rx = slot.revision_tx.subscribe();
        let wait = Duration::from_millis(q.wait_ms.min(MAX_WAIT_MS));
        let _ = tokio::time::timeout(wait, rx.wait_for(|&rev| rev > q.since_revision)).await;
    }
    let r = slot.resource.lock().await;
    Ok(Json(view(&id, &r, q.since_revision)))
}

async fn export_csv(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    let r = slot.resource.lock().await;
    Ok((
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        export_trajectories(&r.session),
    )
        .into_response())
}

async fn get_snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id).await?;
    let r = slot.resource.lock().await;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        r.session.snapshot(),
    )
        .into_response())
}
