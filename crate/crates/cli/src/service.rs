//! JSON HTTP API over a project directory, plus static cockpit assets.
//!
//! Reads load the bundle fresh from disk. Mutating loop commands hold a
//! per-issue async mutex, which is fair, so commands for one issue apply in
//! arrival order while different issues proceed independently.

use std::collections::HashMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use shiftup_core::engine::{latest_run_events, EngineError, LoopEvent, LoopRun};
use shiftup_core::graph::{build_graph, coverage_report, impact_of, phase_order};
use shiftup_core::metrics::{Paradigm, PromptError};
use shiftup_core::workspace::{load_events, Session, WorkspaceError, PROMPTS_LOG};
use shiftup_core::ArtifactBundle;
use tokio::sync::watch;
use tower_http::services::{ServeDir, ServeFile};

use crate::cli::ServeArgs;
use crate::ops::{load_project, open_session, LoopOverrides, OpError, ReportError};
use crate::view::{BundleSummary, IssueView, RunSummary};

/// Longest accepted long-poll wait.
pub const MAX_WAIT_MS: u64 = 30_000;

type Slot = Arc<tokio::sync::Mutex<Option<Session>>>;

pub struct AppState {
    root: PathBuf,
    runs: Mutex<HashMap<String, Slot>>,
    /// Bumped after every mutating command; long-polls wait on it.
    changed: watch::Sender<u64>,
}

impl AppState {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        AppState {
            root: root.into(),
            runs: Mutex::new(HashMap::new()),
            changed: watch::channel(0).0,
        }
    }

    fn slot(&self, issue: &str) -> Slot {
        self.runs
            .lock()
            .expect("run table lock")
            .entry(issue.to_owned())
            .or_default()
            .clone()
    }

    fn existing_slot(&self, issue: &str) -> Option<Slot> {
        self.runs.lock().expect("run table lock").get(issue).cloned()
    }

    fn forget_if_idle(&self, issue: &str) {
        let mut runs = self.runs.lock().expect("run table lock");
        if runs.get(issue).is_some_and(|s| s.try_lock().is_ok_and(|g| g.is_none())) {
            runs.remove(issue);
        }
    }

    fn bump(&self) {
        self.changed.send_modify(|g| *g += 1);
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: String,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl ToString) -> Self {
        ApiError {
            status,
            error: error.to_owned(),
            detail: detail.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.error, "detail": self.detail}))).into_response()
    }
}

fn engine_status(e: &EngineError) -> StatusCode {
    match e {
        EngineError::UnknownIssue(_) => StatusCode::NOT_FOUND,
        EngineError::NoConstraints(_) => StatusCode::CONFLICT,
        e if e.is_conflict() => StatusCode::CONFLICT,
        EngineError::InvalidConfig => StatusCode::BAD_REQUEST,
        EngineError::Agent(_) | EngineError::Runner(_) | EngineError::EmptyPlan | EngineError::ForeignTestId(_) => {
            StatusCode::BAD_GATEWAY
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<OpError> for ApiError {
    fn from(e: OpError) -> Self {
        match &e {
            OpError::Bundle(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "bundle-unavailable", &e),
            OpError::Overrides(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid-overrides", &e),
            OpError::Workspace(WorkspaceError::Engine(inner)) => ApiError::new(engine_status(inner), inner.code(), inner),
            OpError::Workspace(WorkspaceError::Adapter(_)) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "adapter-setup", &e)
            }
            OpError::Workspace(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", &e),
        }
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        OpError::from(e).into()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "task", e))?
}

type Shared = State<Arc<AppState>>;

async fn bundle(s: &AppState) -> Result<ArtifactBundle, ApiError> {
    let root = s.root.clone();
    blocking(move || Ok(load_project(&root)?)).await
}

fn unknown_issue(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "unknown-issue", format!("unknown issue `{id}`"))
}

/// Routes under `/api`, plus `assets` (or a placeholder page) for the rest.
pub fn router(root: impl Into<PathBuf>, assets: Option<PathBuf>) -> Router {
    let state = Arc::new(AppState::new(root));
    let api = Router::new()
        .route("/bundle/summary", get(summary))
        .route("/graph", get(graph))
        .route("/phases/order", get(order))
        .route("/coverage", get(coverage))
        .route("/issues", get(issues))
        .route("/impact/{id}", get(impact))
        .route("/reports/prompts", get(prompts))
        .route("/loop/{issue}/events", get(events))
        .route("/loop/{issue}/open", post(open))
        .route("/loop/{issue}/plan", post(plan))
        .route("/loop/{issue}/approve", post(approve))
        .route("/loop/{issue}/step", post(step))
        .route("/loop/{issue}/run-to-completion", post(run_to_completion))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint") })
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match assets {
        Some(dir) => {
            let index = dir.join("index.html");
            app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => app.fallback(placeholder),
    }
}

async fn placeholder(uri: axum::http::Uri) -> Response {
    if uri.path() == "/" {
        Html(
            "<!doctype html><title>shiftup</title><p>The cockpit assets are not installed. \
             Start the server with <code>--assets DIR</code>; the JSON API lives under <code>/api</code>.</p>",
        )
        .into_response()
    } else {
        StatusCode::NOT_FOUND.into_response()
    }
}

async fn summary(State(s): Shared) -> Result<Json<BundleSummary>, ApiError> {
    Ok(Json(BundleSummary::from(&bundle(&s).await?)))
}

async fn graph(State(s): Shared) -> Result<Json<Value>, ApiError> {
    Ok(Json(build_graph(&bundle(&s).await?).to_json()))
}

async fn order(State(s): Shared) -> Result<Json<Value>, ApiError> {
    let b = bundle(&s).await?;
    let order =
        phase_order(&build_graph(&b)).map_err(|e| ApiError::new(StatusCode::CONFLICT, "dependency-cycle", e))?;
    let phases: Vec<Value> = order
        .iter()
        .filter_map(|id| b.phase(id))
        .map(|p| {
            json!({
                "id": p.id,
                "name": p.name,
                "goal": p.goal,
                "depends_on": p.depends_on,
                "test_ids": p.test_ids,
                "issues": b.issues_in_phase(&p.id).map(|i| i.id.clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Json(json!({"order": order, "phases": phases})))
}

async fn coverage(State(s): Shared) -> Result<Json<Value>, ApiError> {
    let report = coverage_report(&build_graph(&bundle(&s).await?));
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

async fn impact(State(s): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let g = build_graph(&bundle(&s).await?);
    let impacted = impact_of(&g, &id).map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "unknown-id", e))?;
    Ok(Json(json!({"id": id, "impacted": impacted})))
}

async fn issues(State(s): Shared) -> Result<Json<Vec<IssueView>>, ApiError> {
    let root = s.root.clone();
    blocking(move || {
        let b = load_project(&root)?;
        let events = load_events(&root)?;
        let mut out = Vec::with_capacity(b.issues.len());
        for i in &b.issues {
            let run = latest_run_events(&events, &i.id);
            let loop_state = if run.is_empty() {
                None
            } else {
                Some(LoopRun::replay(&run).map_err(WorkspaceError::from)?.state)
            };
            out.push(IssueView {
                id: i.id.clone(),
                title: i.title.clone(),
                phase: i.phase_ref.clone(),
                status: i.status,
                constraints: i.constraint_test_ids.clone(),
                loop_state,
            });
        }
        Ok(Json(out))
    })
    .await
}

#[derive(Deserialize)]
struct PromptsQuery {
    paradigm: Option<String>,
}

async fn prompts(State(s): Shared, q: Result<Query<PromptsQuery>, QueryRejection>) -> Result<Json<Value>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-query", e))?;
    let only = q
        .paradigm
        .map(|p| p.parse::<Paradigm>())
        .transpose()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-query", e))?;
    let log = s.root.join(PROMPTS_LOG);
    blocking(move || match crate::ops::prompt_reports(&log, only) {
        Ok(reports) => Ok(Json(json!({"reports": reports}))),
        Err(e @ ReportError::MissingLog(_)) => Err(ApiError::new(StatusCode::NOT_FOUND, "no-prompt-log", e)),
        Err(e @ ReportError::Log(PromptError::Io { .. })) => {
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e))
        }
        Err(e @ ReportError::Log(_)) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed-log", e)),
        Err(e @ ReportError::Uncategorized(_)) => {
            Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "uncategorized-prompts", e))
        }
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    /// Milliseconds to wait for new events when there are none yet.
    #[serde(default)]
    wait: u64,
}

fn events_after(root: &FsPath, issue: &str, after: u64) -> Result<Vec<LoopEvent>, ApiError> {
    Ok(load_events(root)?
        .into_iter()
        .filter(|e| e.issue == issue && e.seq > after)
        .collect())
}

async fn events(
    State(s): Shared,
    Path(issue): Path<String>,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-query", e))?;
    if bundle(&s).await?.issue(&issue).is_none() {
        return Err(unknown_issue(&issue));
    }
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.wait.min(MAX_WAIT_MS));
    let mut rx = s.changed.subscribe();
    let found = loop {
        rx.borrow_and_update();
        let (root, id) = (s.root.clone(), issue.clone());
        let found = blocking(move || events_after(&root, &id, q.after)).await?;
        if !found.is_empty() || tokio::time::timeout_at(deadline, rx.changed()).await.is_err() {
            break found;
        }
    };
    let last_seq = found.last().map_or(q.after, |e| e.seq);
    Ok(Json(json!({"issue": issue, "events": found, "last_seq": last_seq})))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoFields {}

fn body_json<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed-body", e))
}

async fn open(State(s): Shared, Path(issue): Path<String>, body: Bytes) -> Result<Json<RunSummary>, ApiError> {
    let overrides: LoopOverrides = body_json(&body)?;
    let mut guard = s.slot(&issue).lock_owned().await;
    let (root, id) = (s.root.clone(), issue.clone());
    let result = blocking(move || {
        let session = open_session(&root, &id, &overrides)?;
        let summary = RunSummary::from(&session.run);
        *guard = Some(session);
        Ok(summary)
    })
    .await;
    match &result {
        Err(e) if e.status == StatusCode::NOT_FOUND => s.forget_if_idle(&issue),
        _ => s.bump(),
    }
    result.map(Json)
}

async fn mutate(
    s: Arc<AppState>,
    issue: String,
    body: Bytes,
    op: fn(&mut Session) -> Result<(), WorkspaceError>,
) -> Result<Json<RunSummary>, ApiError> {
    let NoFields {} = body_json(&body)?;
    let Some(slot) = s.existing_slot(&issue) else {
        return Err(match bundle(&s).await?.issue(&issue) {
            None => unknown_issue(&issue),
            Some(_) => not_open(&issue),
        });
    };
    let mut guard = slot.lock_owned().await;
    let id = issue.clone();
    let result = blocking(move || {
        let session = guard.as_mut().ok_or_else(|| not_open(&id))?;
        let outcome = op(session);
        let summary = RunSummary::from(&session.run);
        outcome?;
        Ok(summary)
    })
    .await;
    s.bump();
    result.map(Json)
}

fn not_open(issue: &str) -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "not-open",
        format!("{issue} has no open run in this server; POST /api/loop/{issue}/open first"),
    )
}

async fn plan(State(s): Shared, Path(issue): Path<String>, body: Bytes) -> Result<Json<RunSummary>, ApiError> {
    mutate(s, issue, body, Session::draft_plan).await
}

async fn approve(State(s): Shared, Path(issue): Path<String>, body: Bytes) -> Result<Json<RunSummary>, ApiError> {
    mutate(s, issue, body, Session::approve_plan).await
}

async fn step(State(s): Shared, Path(issue): Path<String>, body: Bytes) -> Result<Json<RunSummary>, ApiError> {
    mutate(s, issue, body, Session::step).await
}

async fn run_to_completion(
    State(s): Shared,
    Path(issue): Path<String>,
    body: Bytes,
) -> Result<Json<RunSummary>, ApiError> {
    mutate(s, issue, body, Session::run_to_completion).await
}

/// Entry point for `shiftup serve`. The bundle must load cleanly first.
pub fn serve_blocking(root: &FsPath, args: ServeArgs) -> Result<u8> {
    let bundle = load_project(root).map_err(OpError::into_anyhow)?;
    let port = args.port.unwrap_or(bundle.config.service.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.bind, port))
            .await
            .with_context(|| format!("cannot listen on {}:{port}", args.bind))?;
        eprintln!("serving {} at http://{}", root.display(), listener.local_addr()?);
        axum::serve(listener, router(root, args.assets))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("server failed")
    })?;
    Ok(0)
}
