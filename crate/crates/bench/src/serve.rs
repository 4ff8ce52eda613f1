//! HTTP/JSON service for interactive LF vetting sessions.
//!
//! Routes (all bodies JSON):
//!
//! | method | path                       | body                   |
//! |--------|----------------------------|------------------------|
//! | POST   | `/sessions`                | `{threshold?}`         |
//! | GET    | `/sessions/{id}/next`      |                        |
//! | POST   | `/sessions/{id}/verdict`   | `{lf_id, useful}`      |
//! | POST   | `/sessions/{id}/finalize`  |                        |
//! | GET    | `/sessions/{id}/state`     |                        |
//!
//! Errors are `{"error": message}` with 404 for unknown sessions or
//! candidates, 409 for repeated verdicts or finalized sessions, 401 for a
//! bad `x-autows-token`. Every verdict is appended to
//! `<output_dir>/sessions/<id>/verdicts.ndjson` before the response is sent.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use autows::iws::{self, CandidateStats, NextCandidate, SelectionStatus, SessionMode, SessionState, VerdictRecord};
use autows::lf::Polarity;
use autows::{DatasetBundle, LFSet, Manifest};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::config::{Method, RunConfig};
use crate::error::{io, Error, Result};
use crate::run::{self, resolve_provenance};

pub const TOKEN_HEADER: &str = "x-autows-token";
pub const TOKEN_ENV: &str = "AUTOWS_TOKEN";

struct Session {
    state: SessionState,
    dir: PathBuf,
}

/// Shared service state: the candidate pool is built once and copied into
/// each new session.
pub struct AppState {
    bundle: DatasetBundle,
    pool: LFSet,
    /// Train-split coverage mask per candidate, for committee previews.
    masks: BTreeMap<String, Vec<bool>>,
    default_threshold: f64,
    output_dir: PathBuf,
    token: Option<String>,
    sessions: Mutex<BTreeMap<String, Session>>,
    next_id: Mutex<u64>,
}

impl AppState {
    /// Loads the dataset and builds the pool for `config`, which must name
    /// the `iws_interactive` method.
    pub fn new(config: &RunConfig, token: Option<String>) -> Result<Self> {
        if config.method != Method::IwsInteractive {
            return Err(Error::Config(format!("serve needs method iws_interactive, not {}", config.method)));
        }
        let manifest = Manifest::read(&config.manifest)?;
        let provenance = resolve_provenance(config, &manifest)
            .ok_or_else(|| Error::Config("manifest lacks the requested provenance".into()))?;
        let bundle = run::load(config, &provenance)?;
        let pool = iws::build_pool(&bundle, &config.canonical().synthesis, config.min_pool)?;
        let mut masks = BTreeMap::new();
        for lf in &pool.lfs {
            let votes = lf.votes(bundle.train_features.values())?;
            masks.insert(lf.id.clone(), votes.iter().map(|&v| v >= 0).collect());
        }
        Ok(Self {
            default_threshold: config
                .iws_threshold
                .unwrap_or_else(|| iws::default_threshold(bundle.classes())),
            bundle,
            pool,
            masks,
            output_dir: config.output_dir.clone(),
            token: token.filter(|t| !t.is_empty()),
            sessions: Mutex::new(BTreeMap::new()),
            next_id: Mutex::new(0),
        })
    }

    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    fn committee(&self, s: &SessionState) -> Committee {
        let useful: Vec<&String> = s
            .verdicts
            .iter()
            .filter(|(_, v)| **v == iws::Verdict::Useful)
            .map(|(id, _)| id)
            .collect();
        let n = self.bundle.train_features.rows();
        let covered = (0..n)
            .filter(|&i| useful.iter().any(|id| self.masks[*id][i]))
            .count();
        Committee {
            size: useful.len(),
            coverage: if n == 0 { 0.0 } else { covered as f64 / n as f64 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub decided: usize,
    pub pending: usize,
}

/// The current useful set and its training-split coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Committee {
    pub size: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub lf_id: String,
    pub useful: bool,
}

/// Response of `GET /sessions/{id}/next`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<CandidateStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner_summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_name: Option<String>,
    pub progress: Progress,
    pub committee: Committee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeSummary {
    pub status: SelectionStatus,
    pub num_lfs: usize,
    pub lf_ids: Vec<String>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub lf_set_path: PathBuf,
    pub summary: FinalizeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub session_id: String,
    pub threshold: f64,
    pub finalized: bool,
    pub progress: Progress,
    pub committee: Committee,
    pub log: Vec<VerdictRecord>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<autows::Error> for ApiError {
    fn from(e: autows::Error) -> Self {
        let code = match e {
            autows::Error::UnknownCandidate(_) => StatusCode::NOT_FOUND,
            autows::Error::AlreadyDecided(_) | autows::Error::SessionFinalized => StatusCode::CONFLICT,
            autows::Error::WrongMode(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Core(c) => c.into(),
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;
type Shared = Arc<AppState>;

fn unknown(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
}

fn progress(s: &SessionState) -> Progress {
    Progress {
        decided: s.decided(),
        pending: s.pending(),
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| io(path, e))?;
    f.sync_data().map_err(|e| io(path, e))
}

async fn create(State(app): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest { threshold: None }
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let threshold = req.threshold.unwrap_or(app.default_threshold);
    if !threshold.is_finite() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "threshold must be finite".into()));
    }
    let state = SessionState::new(app.pool.clone(), &app.bundle, SessionMode::Interactive, threshold)?;
    let id = {
        let mut n = app.next_id.lock().expect("id lock");
        *n += 1;
        format!("s{n}")
    };
    let dir = app.output_dir.join("sessions").join(&id);
    fs::create_dir_all(&dir).map_err(|e| ApiError::from(io(&dir, e)))?;
    // an empty log marks the session as started
    fs::write(dir.join("verdicts.ndjson"), "").map_err(|e| ApiError::from(io(&dir, e)))?;
    app.sessions
        .lock()
        .expect("session lock")
        .insert(id.clone(), Session { state, dir });
    log::info!("session {id} created (threshold {threshold})");
    let body = json!({ "session_id": id, "threshold": threshold, "pool_size": app.pool.len() });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn next(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<NextResponse>> {
    let sessions = app.sessions.lock().expect("session lock");
    let s = &sessions.get(&id).ok_or_else(|| unknown(&id))?.state;
    let mut resp = NextResponse {
        done: true,
        lf_id: None,
        stats: None,
        learner_summary: None,
        target_class: None,
        target_name: None,
        progress: progress(s),
        committee: app.committee(s),
    };
    if let NextCandidate::Candidate { lf_id, stats } = s.next()? {
        let lf = s.pool.get(&lf_id).expect("pool holds every ordered id");
        let target = match lf.polarity {
            Polarity::Unipolar { target } => Some(target),
            Polarity::Multipolar => None,
        };
        resp.done = false;
        resp.learner_summary = Some(lf.learner.summary());
        resp.target_name = target.and_then(|t| app.bundle.val_labels.class_names().get(t).cloned());
        resp.target_class = target;
        resp.stats = Some(stats);
        resp.lf_id = Some(lf_id);
    }
    Ok(Json(resp))
}

async fn verdict(
    State(app): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<VerdictRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut sessions = app.sessions.lock().expect("session lock");
    let session = sessions.get_mut(&id).ok_or_else(|| unknown(&id))?;
    session.state.verdict(&req.lf_id, req.useful)?;
    let record = VerdictRecord {
        lf_id: req.lf_id,
        useful: req.useful,
    };
    let line = serde_json::to_string(&record).map_err(Error::from)? + "\n";
    append_line(&session.dir.join("verdicts.ndjson"), &line)?;
    Ok(Json(json!({
        "recorded": record,
        "progress": progress(&session.state),
        "committee": app.committee(&session.state),
    })))
}

async fn finalize(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<FinalizeResponse>> {
    let mut sessions = app.sessions.lock().expect("session lock");
    let session = sessions.get_mut(&id).ok_or_else(|| unknown(&id))?;
    let committee = app.committee(&session.state);
    let selection = session.state.finalize()?;
    let path = session.dir.join("lfset.json");
    selection.lfset.write(&path).map_err(Error::from)?;
    log::info!("session {id} finalized with {} LFs", selection.lfset.len());
    Ok(Json(FinalizeResponse {
        lf_set_path: path,
        summary: FinalizeSummary {
            status: selection.status,
            num_lfs: selection.lfset.len(),
            lf_ids: selection.lfset.lfs.iter().map(|lf| lf.id.clone()).collect(),
            coverage: committee.coverage,
        },
    }))
}

async fn state(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StateResponse>> {
    let sessions = app.sessions.lock().expect("session lock");
    let s = &sessions.get(&id).ok_or_else(|| unknown(&id))?.state;
    Ok(Json(StateResponse {
        session_id: id,
        threshold: s.threshold,
        finalized: s.finalized,
        progress: progress(s),
        committee: app.committee(s),
        log: s.log.clone(),
    }))
}

async fn check_token(State(app): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let given = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(token.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or invalid token".into()).into_response();
        }
    }
    next.run(req).await
}

/// The session API, optionally with a static UI bundle at `/`.
pub fn router(app: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/verdict", post(verdict))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/state", get(state))
        .route_layer(middleware::from_fn_with_state(app.clone(), check_token))
        .with_state(app);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c. Verdicts are written synchronously, so nothing is
/// lost on shutdown.
pub async fn serve(app: Arc<AppState>, addr: SocketAddr, ui_dir: Option<PathBuf>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| Error::Bind { addr, source })?;
    log::info!("listening on {}", listener.local_addr().map_err(|source| Error::Bind { addr, source })?);
    axum::serve(listener, router(app, ui_dir.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
        .map_err(|source| Error::Bind { addr, source })
}
