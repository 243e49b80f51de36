use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use ferry_core::model::State;
use ferry_core::ocp::TrajectoryPlan;
use ferry_core::planner::LiveSession;
use ferry_core::scenario::{presets, Scenario};
use ferry_service::{router, AppState, ServiceConfig, COALESCED_HEADER};

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, headers)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b, _) = call(app, method, uri, body.to_string()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn small_live(id: &str) -> Scenario {
    let mut sc = presets::live_crossing();
    sc.id = Some(id.into());
    sc.n_nodes = 12;
    sc
}

async fn with_scenario(app: &Router, sc: &Scenario) {
    let (s, v) = call_json(app, "POST", "/scenarios", serde_json::to_value(sc).unwrap()).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
}

async fn with_session(app: &Router, scenario: &str, id: &str) -> LiveSession {
    let (s, v) = call_json(app, "POST", "/sessions", json!({ "id": id, "scenario_id": scenario })).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn health_reports_version() {
    let app = router(AppState::in_memory());
    let (s, v) = call_json(&app, "GET", "/health", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn scenario_create_and_fetch() {
    let app = router(AppState::in_memory());
    let sc = small_live("live");
    with_scenario(&app, &sc).await;
    let (s, v) = call_json(&app, "GET", "/scenarios/live", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    let back: Scenario = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(back.corridor, sc.corridor);
    assert!(v["created"].is_string() && v["modified"].is_string());
    let (s, _) = call_json(&app, "POST", "/scenarios", serde_json::to_value(&sc).unwrap()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, v) = call_json(&app, "GET", "/scenarios", Value::Null).await;
    assert_eq!((s, v), (StatusCode::OK, json!(["live"])));
    let (s, v) = call_json(&app, "GET", "/scenarios/nope", Value::Null).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn invalid_scenarios_are_rejected() {
    let app = router(AppState::in_memory());
    let mut sc = small_live("bad");
    sc.t_end = sc.t_now;
    let (s, v) = call_json(&app, "POST", "/scenarios", serde_json::to_value(&sc).unwrap()).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_scenario")));
    let mut sc = small_live("../etc");
    sc.id = Some("../etc".into());
    let (s, v) = call_json(&app, "POST", "/scenarios", serde_json::to_value(&sc).unwrap()).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("id")));
    let mut v = serde_json::to_value(small_live("csv")).unwrap();
    v["env_csv"] = json!("field.csv");
    v.as_object_mut().unwrap().remove("env_model");
    let (s, v) = call_json(&app, "POST", "/scenarios", v).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("env_csv")));
}

#[tokio::test]
async fn malformed_json_names_the_field() {
    let app = router(AppState::in_memory());
    with_scenario(&app, &small_live("live")).await;
    with_session(&app, "live", "s").await;

    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": 10.0, "state": [1.0, 2.0, 3.0] })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_json");
    assert_eq!(v["field"], "state");
    assert!(v["message"].as_str().unwrap().contains("length"), "{v}");

    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": "soon", "state": [0, 0, 0, 0, 0, 0] })).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("t")));

    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": 1.0, "state": [0, 0, 0, 0, 0, 0], "extra": 1 })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("extra"), "{v}");

    let (s, b, _) = call(&app, "POST", "/sessions/s/state", "{\"t\": 1.0,").await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!((s, v["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_json")));

    let (s, v) = call_json(&app, "POST", "/scenarios/live/pareto", json!({ "durations": [], "scalings": [0] })).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("durations")));
}

#[tokio::test]
async fn state_update_round_trip() {
    let app = router(AppState::in_memory());
    let sc = small_live("live");
    with_scenario(&app, &sc).await;
    let session = with_session(&app, "live", "s").await;
    let first = session.active.expect("initial plan");
    assert!(first.converged());
    assert_eq!(session.history.len(), 1);

    let mut x = first.state_at(60.0);
    x.y_l += 20.0;
    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": 60.0, "state": x })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let plan: TrajectoryPlan = serde_json::from_value(v).unwrap();
    assert!(plan.converged());
    assert_eq!(plan.start_time(), 60.0);
    assert_eq!(plan.end_time(), sc.t_end);
    let x0: [f64; 6] = plan.states[0].into();
    let xs: [f64; 6] = x.into();
    assert!(x0.iter().zip(xs).all(|(a, b)| (a - b).abs() <= 1e-6 * (1.0 + b.abs())), "{x0:?} vs {xs:?}");

    let (s, v) = call_json(&app, "GET", "/sessions/s/plan", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_value::<TrajectoryPlan>(v).unwrap(), plan);

    let (s, v) = call_json(&app, "GET", "/sessions/s/nudge", Value::Null).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v["heading_delta"].as_f64().unwrap().is_finite());
    assert!(!v["text"].as_str().unwrap().is_empty());
    let (_, v) = call_json(&app, "GET", "/sessions/s/nudge?now=200", Value::Null).await;
    assert_eq!(v["severity"], "warn");

    let (_, v) = call_json(&app, "GET", "/sessions/s", Value::Null).await;
    assert_eq!(v["history"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn failures_keep_the_active_plan() {
    let app = router(AppState::in_memory());
    let sc = small_live("live");
    with_scenario(&app, &sc).await;
    let session = with_session(&app, "live", "s").await;
    let first = session.active.unwrap();

    let outside = State { y_l: 400.0, ..first.state_at(30.0) };
    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": 30.0, "state": outside })).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("build_error")), "{v}");
    let (_, v) = call_json(&app, "GET", "/sessions/s/plan", Value::Null).await;
    assert_eq!(serde_json::from_value::<TrajectoryPlan>(v).unwrap(), first);

    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": 10.0, "state": first.state_at(10.0) })).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("time_reversal")));
    let (s, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": sc.t_end, "state": sc.x_dock })).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("session_complete")));
    let (s, _) = call_json(&app, "POST", "/sessions/none/state", json!({ "t": 1.0, "state": sc.x_dock })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn hover_session_has_no_energy() {
    let app = router(AppState::in_memory());
    let mut sc = presets::hover();
    sc.id = Some("hover".into());
    with_scenario(&app, &sc).await;
    let session = with_session(&app, "hover", "h").await;
    assert!(session.active.unwrap().total_energy <= 1.0);
}

#[tokio::test]
async fn fit_env_updates_the_scenario() {
    let app = router(AppState::in_memory());
    with_scenario(&app, &small_live("live")).await;
    let mut csv = String::from("x_l,y_l,vx_wind,vy_wind,vx_current,vy_current\n");
    for i in 0..5 {
        for j in 0..3 {
            let (x, y) = (i as f64 * 600.0, j as f64 * 150.0 - 150.0);
            csv.push_str(&format!("{x},{y},2,-9,{},0\n", 0.05 + 1e-5 * x));
        }
    }
    let (s, b, _) = call(&app, "POST", "/scenarios/live/fit-env", csv).await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["report"]["sample_count"], 15);
    assert!(v["report"]["wind"]["max_abs_error"].as_f64().unwrap() < 1e-9);
    let (_, v) = call_json(&app, "GET", "/scenarios/live", Value::Null).await;
    let sc: Scenario = serde_json::from_value(v).unwrap();
    let env = sc.env().unwrap();
    assert!((env.current.value([1000.0, 0.0])[0] - 0.06).abs() < 1e-9);
    assert!(env.fitted_at.is_some());

    let (s, b, _) = call(&app, "POST", "/scenarios/live/fit-env", "x_l,y_l,vx_wind,vy_wind,vx_current,vy_current\n").await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!((s, v["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("fit_failed")));
    assert!(v["message"].as_str().unwrap().contains("at least 6"), "{v}");
    let (s, _, _) = call(&app, "POST", "/scenarios/live/fit-env", "0,0,1,1\n").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn field_grid_samples_the_corridor_box() {
    let app = router(AppState::in_memory());
    let sc = small_live("live");
    with_scenario(&app, &sc).await;
    let (s, v) = call_json(&app, "GET", "/scenarios/live/field-grid?nx=4&ny=3", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 12);
    let env = sc.env().unwrap();
    for p in pts {
        let (x, y) = (p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap());
        let w = env.wind.value([x, y]);
        assert_eq!(p["wind"], json!(w));
        assert_eq!(p["inside"], json!(sc.corridor.contains([x, y])));
    }
    assert_eq!(pts[0]["x"], v["bounds"][0]);
    assert_eq!(pts[11]["y"], v["bounds"][3]);
    let (s, v) = call_json(&app, "GET", "/scenarios/live/field-grid?nx=1", Value::Null).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("nx")));
}

#[tokio::test]
async fn pareto_rows_in_grid_order() {
    let app = router(AppState::in_memory());
    let mut sc = presets::transit(600.0);
    sc.id = Some("transit".into());
    sc.n_nodes = 8;
    with_scenario(&app, &sc).await;
    let body = json!({ "durations": [600.0, 500.0], "scalings": [0.0, 1.0] });
    let (s, v) = call_json(&app, "POST", "/scenarios/transit/pareto", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(v["schema_version"], 1);
    assert_eq!((rows[1]["duration"].as_f64(), rows[1]["scaling"].as_f64()), (Some(500.0), Some(0.0)));

    let (s, b, h) = call(&app, "POST", "/scenarios/transit/pareto?format=csv", body.to_string()).await;
    assert_eq!(s, StatusCode::OK);
    assert!(h["content-type"].to_str().unwrap().starts_with("text/csv"));
    let text = String::from_utf8(b).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("schema_version,duration_s,scaling,"));
}

#[tokio::test]
async fn events_follow_a_replan() {
    let state = AppState::in_memory();
    let app = router(state.clone());
    with_scenario(&app, &small_live("live")).await;
    let session = with_session(&app, "live", "s").await;
    let mut rx = state.subscribe("s").unwrap();
    let x = session.active.unwrap().state_at(40.0);
    let (s, _) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": 40.0, "state": x })).await;
    assert_eq!(s, StatusCode::OK);
    let mut kinds = Vec::new();
    while let Ok(ev) = rx.try_recv() {
        serde_json::from_str::<Value>(&ev.data).unwrap();
        kinds.push(ev.kind);
    }
    assert_eq!(kinds.first(), Some(&"solver-iteration"));
    let tail = &kinds[kinds.len() - 2..];
    assert_eq!(tail, ["plan-updated", "nudge"]);
}

#[tokio::test]
async fn event_stream_opens_with_the_active_plan() {
    let app = router(AppState::in_memory());
    with_scenario(&app, &small_live("live")).await;
    let session = with_session(&app, "live", "s").await;
    let req = Request::builder().uri("/sessions/s/events").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    let frame = body.frame().await.unwrap().unwrap().into_data().unwrap();
    let text = String::from_utf8(frame.to_vec()).unwrap();
    assert!(text.starts_with("event: plan-updated\ndata: "), "{text}");
    let data = text.trim_end().strip_prefix("event: plan-updated\ndata: ").unwrap();
    let plan: TrajectoryPlan = serde_json::from_str(data).unwrap();
    assert_eq!(Some(plan), session.active);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_updates_coalesce_to_the_latest() {
    let app = router(AppState::in_memory());
    with_scenario(&app, &small_live("live")).await;
    let session = with_session(&app, "live", "s").await;
    let plan = session.active.unwrap();
    let updates: Vec<(f64, State)> = [30.0, 31.0, 32.0, 33.0].into_iter().map(|t| (t, plan.state_at(t))).collect();
    let mut handles = Vec::new();
    for (t, x) in updates {
        let app = app.clone();
        handles.push(tokio::spawn(async move { call(&app, "POST", "/sessions/s/state", json!({ "t": t, "state": x }).to_string()).await }));
    }
    let mut responses = Vec::new();
    for h in handles {
        responses.push(h.await.unwrap());
    }
    let (_, v) = call_json(&app, "GET", "/sessions/s", Value::Null).await;
    let s: LiveSession = serde_json::from_value(v).unwrap();
    let solved = s.history.len() - 1;
    assert!((1..=4).contains(&solved), "{solved}");
    let coalesced = responses.iter().filter(|r| r.2.contains_key(COALESCED_HEADER)).count();
    assert_eq!(solved + coalesced, 4);
    for (status, body, headers) in &responses {
        if headers.contains_key(COALESCED_HEADER) {
            assert!(status.is_success() || status.is_client_error());
            let ticket: usize = headers[COALESCED_HEADER].to_str().unwrap().parse().unwrap();
            assert!((1..=4).contains(&ticket));
        }
        let _: Value = serde_json::from_slice(body).unwrap();
    }
    let times: Vec<f64> = s.history.iter().map(|h| h.t).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]), "{times:?}");
}

#[tokio::test]
async fn data_directory_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let app = router(AppState::new(config.clone()).unwrap());
    with_scenario(&app, &small_live("live")).await;
    let session = with_session(&app, "live", "s").await;
    let x = session.active.as_ref().unwrap().state_at(50.0);
    call_json(&app, "POST", "/sessions/s/state", json!({ "t": 50.0, "state": x })).await;
    let (_, before) = call_json(&app, "GET", "/sessions/s", Value::Null).await;
    assert!(dir.path().join("scenarios/live.json").is_file());
    assert!(dir.path().join("sessions/s.json").is_file());

    let again = router(AppState::new(config).unwrap());
    let (s, after) = call_json(&again, "GET", "/sessions/s", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before, after);
    let (s, _) = call_json(&again, "GET", "/scenarios/live", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn replaying_history_through_a_fresh_service() {
    let app = router(AppState::in_memory());
    with_scenario(&app, &small_live("live")).await;
    let session = with_session(&app, "live", "s").await;
    let mut plan = session.active.unwrap();
    for (i, t) in [40.0, 100.0, 160.0].into_iter().enumerate() {
        let mut x = plan.state_at(t);
        x.y_l -= 8.0 * (i + 1) as f64;
        let (_, v) = call_json(&app, "POST", "/sessions/s/state", json!({ "t": t, "state": x })).await;
        plan = serde_json::from_value(v).unwrap();
    }
    let (_, v) = call_json(&app, "GET", "/sessions/s", Value::Null).await;
    let recorded: LiveSession = serde_json::from_value(v).unwrap();

    let fresh = router(AppState::in_memory());
    with_scenario(&fresh, &small_live("live")).await;
    with_session(&fresh, "live", "s").await;
    for h in &recorded.history[1..] {
        call_json(&fresh, "POST", "/sessions/s/state", json!({ "t": h.t, "state": h.state })).await;
    }
    let (_, v) = call_json(&fresh, "GET", "/sessions/s", Value::Null).await;
    let replayed: LiveSession = serde_json::from_value(v).unwrap();
    assert_eq!(replayed.history, recorded.history);
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let err = ferry_service::serve(addr, ServiceConfig::default()).await.unwrap_err();
    assert!(matches!(err, ferry_service::ServeError::Bind { .. }), "{err}");
}
