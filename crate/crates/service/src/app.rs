use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State as AxState};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{stream, Stream, StreamExt};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use ferry_core::field::{parse_samples, fit_env_report, EnvFitReport, EnvModel};
use ferry_core::model::State;
use ferry_core::ocp::TrajectoryPlan;
use ferry_core::planner::{
    make_nudge, pareto_sweep, PlanError, plan_session_with_observer, update_state_with_observer, LiveSession, Nudge, NudgeConfig, ParetoResult,
};
use ferry_core::scenario::{Scenario, SCENARIO_SCHEMA_VERSION};
use ferry_nlp::IterationRecord;

use crate::error::{parse_json, ApiError};
use crate::store::{valid_id, Store};

/// Set on a state-update response whose submitted state was superseded by a
/// newer update before it could be solved; the body is the newer plan.
pub const COALESCED_HEADER: &str = "x-ferry-coalesced";

pub const FIELD_GRID_SCHEMA_VERSION: u32 = 1;
const MAX_GRID_SIDE: usize = 200;
const MAX_PARETO_POINTS: usize = 400;
const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Where scenarios and session histories are kept; `None` keeps them in memory.
    pub data_dir: Option<PathBuf>,
    pub nudge: NudgeConfig,
}

/// One server-push message on a session stream.
#[derive(Debug, Clone)]
pub struct SessionEvent {
    pub kind: &'static str,
    pub data: String,
}

impl SessionEvent {
    fn new<T: Serialize>(kind: &'static str, value: &T) -> Self {
        SessionEvent { kind, data: serde_json::to_string(value).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")) }
    }
}

struct Pending {
    ticket: u64,
    t: f64,
    state: State,
}

struct Outcome {
    ticket: u64,
    result: Result<TrajectoryPlan, ApiError>,
}

struct SessionSlot {
    snapshot: RwLock<LiveSession>,
    solving: tokio::sync::Mutex<()>,
    pending: Mutex<Option<Pending>>,
    last: Mutex<Option<Outcome>>,
    tickets: AtomicU64,
    events: broadcast::Sender<SessionEvent>,
}

impl SessionSlot {
    fn new(session: LiveSession) -> Arc<Self> {
        Arc::new(SessionSlot {
            snapshot: RwLock::new(session),
            solving: tokio::sync::Mutex::new(()),
            pending: Mutex::new(None),
            last: Mutex::new(None),
            tickets: AtomicU64::new(0),
            events: broadcast::channel(EVENT_BUFFER).0,
        })
    }

    fn snapshot(&self) -> LiveSession {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

struct Inner {
    store: Store,
    nudge: NudgeConfig,
    scenarios: RwLock<BTreeMap<String, Arc<Scenario>>>,
    sessions: RwLock<BTreeMap<String, Arc<SessionSlot>>>,
    ids: AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn now_stamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl AppState {
    /// Opens the data directory, if any, and loads what it holds.
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        let store = match &config.data_dir {
            Some(dir) => Store::open(dir)?,
            None => Store::memory(),
        };
        let mut scenarios = BTreeMap::new();
        for sc in store.load_scenarios()? {
            match sc.id.clone() {
                Some(id) if valid_id(&id) => {
                    scenarios.insert(id, Arc::new(sc));
                }
                _ => warn!("skipping stored scenario without a valid id"),
            }
        }
        let mut sessions = BTreeMap::new();
        for s in store.load_sessions()? {
            if scenarios.contains_key(&s.scenario_id) {
                sessions.insert(s.id.clone(), SessionSlot::new(s));
            } else {
                warn!("skipping session {}: scenario {} is missing", s.id, s.scenario_id);
            }
        }
        info!("loaded {} scenarios and {} sessions", scenarios.len(), sessions.len());
        Ok(AppState {
            inner: Arc::new(Inner {
                store,
                nudge: config.nudge,
                scenarios: RwLock::new(scenarios),
                sessions: RwLock::new(sessions),
                ids: AtomicU64::new(0),
            }),
        })
    }

    pub fn in_memory() -> Self {
        AppState::new(ServiceConfig::default()).expect("memory store cannot fail")
    }

    pub fn scenario(&self, id: &str) -> Result<Arc<Scenario>, ApiError> {
        self.inner.scenarios.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned().ok_or_else(|| ApiError::not_found("scenario", id))
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.inner.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    /// Subscribes to a session's event stream.
    pub fn subscribe(&self, session_id: &str) -> Result<broadcast::Receiver<SessionEvent>, ApiError> {
        Ok(self.slot(session_id)?.events.subscribe())
    }

    fn fresh_id(&self, prefix: &str, taken: impl Fn(&str) -> bool) -> String {
        loop {
            let n = self.inner.ids.fetch_add(1, Ordering::Relaxed) + 1;
            let id = format!("{prefix}-{n}");
            if !taken(&id) {
                return id;
            }
        }
    }

    fn put_scenario(&self, id: &str, scenario: Scenario) -> Result<Arc<Scenario>, ApiError> {
        self.inner.store.save_scenario(id, &scenario).map_err(|e| ApiError::internal(format!("cannot persist scenario: {e}")))?;
        let sc = Arc::new(scenario);
        self.inner.scenarios.write().unwrap_or_else(|e| e.into_inner()).insert(id.to_string(), sc.clone());
        Ok(sc)
    }

    fn persist(&self, session: &LiveSession) {
        if let Err(e) = self.inner.store.save_session(session) {
            warn!("cannot persist session {}: {e}", session.id);
        }
    }

    /// Runs one solve on a copy of the session and publishes the result.
    async fn solve<F>(&self, slot: &Arc<SessionSlot>, step: F) -> Result<TrajectoryPlan, ApiError>
    where
        F: FnOnce(&mut LiveSession, &Scenario, &mut dyn FnMut(&IterationRecord)) -> Result<TrajectoryPlan, PlanError>
            + Send
            + 'static,
    {
        let mut session = slot.snapshot();
        let scenario = self.scenario(&session.scenario_id)?;
        let events = slot.events.clone();
        let (session, result) = tokio::task::spawn_blocking(move || {
            let mut observer = |rec: &IterationRecord| {
                let _ = events.send(SessionEvent::new("solver-iteration", rec));
            };
            let result = step(&mut session, &scenario, &mut observer);
            (session, result)
        })
        .await
        .map_err(|e| ApiError::internal(format!("solver task failed: {e}")))?;
        self.persist(&session);
        *slot.snapshot.write().unwrap_or_else(|e| e.into_inner()) = session.clone();
        let result = result.map_err(ApiError::from);
        match &result {
            Ok(plan) => {
                let _ = slot.events.send(SessionEvent::new("plan-updated", plan));
                if let Ok(n) = make_nudge(&session, None, &self.inner.nudge) {
                    let _ = slot.events.send(SessionEvent::new("nudge", &n));
                }
            }
            Err(e) => {
                let _ = slot.events.send(SessionEvent::new("plan-failed", e));
            }
        }
        result
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scenarios", get(list_scenarios).post(create_scenario))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/scenarios/{id}/fit-env", post(fit_env))
        .route("/scenarios/{id}/pareto", post(pareto))
        .route("/scenarios/{id}/field-grid", get(field_grid))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/state", post(post_state))
        .route("/sessions/{id}/plan", get(get_plan))
        .route("/sessions/{id}/nudge", get(get_nudge))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn list_scenarios(AxState(app): AxState<AppState>) -> Json<Vec<String>> {
    Json(app.inner.scenarios.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect())
}

async fn create_scenario(AxState(app): AxState<AppState>, body: Bytes) -> Result<(StatusCode, Json<Scenario>), ApiError> {
    let mut sc: Scenario = parse_json(&body)?;
    if sc.env_csv.is_some() {
        return Err(ApiError { field: Some("env_csv".into()), ..ApiError::bad_request("env_csv paths are not resolved by the service; upload the samples to /scenarios/{id}/fit-env") });
    }
    sc.validate()?;
    let id = match sc.id.clone() {
        Some(id) if !valid_id(&id) => {
            return Err(ApiError { field: Some("id".into()), ..ApiError::bad_request("ids use letters, digits, '-' and '_' (at most 64)") })
        }
        Some(id) => id,
        None => app.fresh_id("scenario", |id| app.scenario(id).is_ok()),
    };
    if app.scenario(&id).is_ok() {
        return Err(ApiError::new(StatusCode::CONFLICT, "exists", format!("scenario {id:?} already exists")));
    }
    let stamp = now_stamp();
    sc.id = Some(id.clone());
    sc.schema_version = Some(SCENARIO_SCHEMA_VERSION);
    sc.created.get_or_insert_with(|| stamp.clone());
    sc.modified = Some(stamp);
    let sc = app.put_scenario(&id, sc)?;
    Ok((StatusCode::CREATED, Json((*sc).clone())))
}

async fn get_scenario(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Json<Scenario>, ApiError> {
    Ok(Json((*app.scenario(&id)?).clone()))
}

#[derive(Debug, Serialize)]
struct FitEnvResponse {
    scenario_id: String,
    env_model: EnvModel,
    report: EnvFitReport,
}

async fn fit_env(AxState(app): AxState<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<FitEnvResponse>, ApiError> {
    let current = app.scenario(&id)?;
    let samples = parse_samples(&body[..]).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let (mut model, report) = fit_env_report(&samples).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "fit_failed", e.to_string()))?;
    let stamp = now_stamp();
    model.fitted_at = Some(stamp.clone());
    let mut sc = (*current).clone();
    sc.env_model = Some(model.clone());
    sc.modified = Some(stamp);
    app.put_scenario(&id, sc)?;
    Ok(Json(FitEnvResponse { scenario_id: id, env_model: model, report }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParetoRequest {
    durations: Vec<f64>,
    scalings: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn pareto(
    AxState(app): AxState<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let sc = app.scenario(&id)?;
    let req: ParetoRequest = parse_json(&body)?;
    let field_error = |field: &str, message: &str| ApiError { field: Some(field.into()), ..ApiError::bad_request(message) };
    if req.durations.is_empty() || req.durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(field_error("durations", "give at least one positive, finite duration"));
    }
    if req.scalings.is_empty() || req.scalings.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(field_error("scalings", "give at least one non-negative, finite scaling"));
    }
    if req.durations.len() * req.scalings.len() > MAX_PARETO_POINTS {
        return Err(ApiError::bad_request(format!("at most {MAX_PARETO_POINTS} grid points per sweep")));
    }
    let csv = match q.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(ApiError { field: Some("format".into()), ..ApiError::bad_request(format!("unknown format {other:?}")) }),
    };
    let result: ParetoResult = tokio::task::spawn_blocking(move || pareto_sweep(&sc, &req.durations, &req.scalings))
        .await
        .map_err(|e| ApiError::internal(format!("sweep failed: {e}")))?;
    if csv {
        Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], result.to_csv()).into_response())
    } else {
        Ok(Json(result).into_response())
    }
}

#[derive(Debug, Deserialize)]
struct GridQuery {
    nx: Option<usize>,
    ny: Option<usize>,
}

#[derive(Debug, Serialize)]
struct GridPoint {
    x: f64,
    y: f64,
    wind: [f64; 2],
    current: [f64; 2],
    inside: bool,
}

#[derive(Debug, Serialize)]
struct FieldGrid {
    schema_version: u32,
    nx: usize,
    ny: usize,
    /// `[x_min, y_min, x_max, y_max]` of the corridor.
    bounds: [f64; 4],
    points: Vec<GridPoint>,
}

async fn field_grid(AxState(app): AxState<AppState>, Path(id): Path<String>, Query(q): Query<GridQuery>) -> Result<Json<FieldGrid>, ApiError> {
    let sc = app.scenario(&id)?;
    let (nx, ny) = (q.nx.unwrap_or(20), q.ny.unwrap_or(10));
    for (name, n) in [("nx", nx), ("ny", ny)] {
        if !(2..=MAX_GRID_SIDE).contains(&n) {
            return Err(ApiError { field: Some(name.into()), ..ApiError::bad_request(format!("{name} must be between 2 and {MAX_GRID_SIDE}")) });
        }
    }
    let env = sc.env()?;
    let verts = sc.corridor.vertices();
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for v in verts {
        b = [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])];
    }
    let mut points = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = b[1] + (b[3] - b[1]) * j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            let x = b[0] + (b[2] - b[0]) * i as f64 / (nx - 1) as f64;
            let p = [x, y];
            points.push(GridPoint { x, y, wind: env.wind.value(p), current: env.current.value(p), inside: sc.corridor.contains(p) });
        }
    }
    Ok(Json(FieldGrid { schema_version: FIELD_GRID_SCHEMA_VERSION, nx, ny, bounds: b, points }))
}

async fn list_sessions(AxState(app): AxState<AppState>) -> Json<Vec<String>> {
    Json(app.inner.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    #[serde(default)]
    id: Option<String>,
    scenario_id: String,
    /// Defaults to the scenario departure time.
    #[serde(default)]
    t: Option<f64>,
    /// Defaults to the scenario start state.
    #[serde(default)]
    state: Option<State>,
}

/// Creates the session and plans from its initial state. A failed first plan
/// still leaves the session in place for later updates.
async fn create_session(AxState(app): AxState<AppState>, body: Bytes) -> Result<(StatusCode, Json<LiveSession>), ApiError> {
    let req: NewSession = parse_json(&body)?;
    let sc = app.scenario(&req.scenario_id)?;
    let id = match req.id {
        Some(id) if !valid_id(&id) => {
            return Err(ApiError { field: Some("id".into()), ..ApiError::bad_request("ids use letters, digits, '-' and '_' (at most 64)") })
        }
        Some(id) => id,
        None => app.fresh_id("session", |id| app.slot(id).is_ok()),
    };
    let session = LiveSession::new(id.clone(), req.scenario_id, req.t.unwrap_or(sc.t_now), req.state.unwrap_or(sc.x_hat));
    let slot = SessionSlot::new(session);
    {
        let mut sessions = app.inner.sessions.write().unwrap_or_else(|e| e.into_inner());
        if sessions.contains_key(&id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "exists", format!("session {id:?} already exists")));
        }
        sessions.insert(id, slot.clone());
    }
    let _guard = slot.solving.lock().await;
    let result = app.solve(&slot, |s, sc, obs| plan_session_with_observer(s, sc, obs)).await;
    match result {
        Ok(_) => Ok((StatusCode::CREATED, Json(slot.snapshot()))),
        Err(e) => Err(e),
    }
}

async fn get_session(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Json<LiveSession>, ApiError> {
    Ok(Json(app.slot(&id)?.snapshot()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateUpdate {
    t: f64,
    state: State,
}

/// Latest wins: an update that arrives while a solve is running replaces any
/// update still waiting, and every waiting caller receives the plan for the
/// newest state.
async fn post_state(AxState(app): AxState<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let req: StateUpdate = parse_json(&body)?;
    let ticket = slot.tickets.fetch_add(1, Ordering::SeqCst) + 1;
    *slot.pending.lock().unwrap_or_else(|e| e.into_inner()) = Some(Pending { ticket, t: req.t, state: req.state });

    let _guard = slot.solving.lock().await;
    let next = slot.pending.lock().unwrap_or_else(|e| e.into_inner()).take();
    if let Some(p) = next {
        let (t, x) = (p.t, p.state);
        let result = app.solve(&slot, move |s, sc, obs| update_state_with_observer(s, sc, t, x, obs)).await;
        *slot.last.lock().unwrap_or_else(|e| e.into_inner()) = Some(Outcome { ticket: p.ticket, result });
    }
    let last = slot.last.lock().unwrap_or_else(|e| e.into_inner());
    let Some(outcome) = last.as_ref().filter(|o| o.ticket >= ticket) else {
        return Err(ApiError::internal("state update was lost"));
    };
    let mut response = match &outcome.result {
        Ok(plan) => Json(plan).into_response(),
        Err(e) => e.clone().into_response(),
    };
    if outcome.ticket != ticket {
        response.headers_mut().insert(COALESCED_HEADER, HeaderValue::from(outcome.ticket));
    }
    Ok(response)
}

async fn get_plan(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Json<TrajectoryPlan>, ApiError> {
    app.slot(&id)?.snapshot().active.map(Json).ok_or_else(|| ApiError::from(PlanError::NoActivePlan))
}

#[derive(Debug, Deserialize)]
struct NudgeQuery {
    now: Option<f64>,
}

async fn get_nudge(AxState(app): AxState<AppState>, Path(id): Path<String>, Query(q): Query<NudgeQuery>) -> Result<Json<Nudge>, ApiError> {
    let session = app.slot(&id)?.snapshot();
    Ok(Json(make_nudge(&session, q.now, &app.inner.nudge)?))
}

/// Server-sent events; the active plan, if any, is sent first.
async fn events(AxState(app): AxState<AppState>, Path(id): Path<String>) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = app.slot(&id)?;
    let rx = slot.events.subscribe();
    let initial: Vec<SessionEvent> = slot.snapshot().active.iter().map(|p| SessionEvent::new("plan-updated", p)).collect();
    let live = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => return Some((ev, rx)),
                Err(broadcast::error::RecvError::Lagged(n)) => warn!("event stream lagged by {n} messages"),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let s = stream::iter(initial).chain(live).map(|ev| Ok(Event::default().event(ev.kind).data(ev.data)));
    Ok(Sse::new(s).keep_alive(KeepAlive::default()))
}
