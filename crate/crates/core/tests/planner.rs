use ferry_core::model::State;
use ferry_core::ocp::check_plan;
use ferry_core::planner::*;
use ferry_core::scenario::{presets, Scenario, ShrinkMode};

fn coarse(mut s: Scenario, n: usize) -> Scenario {
    s.n_nodes = n;
    s
}

fn assert_plan_invariants(sc: &Scenario, plan: &ferry_core::ocp::TrajectoryPlan, x_hat: &State) {
    assert!(plan.converged(), "{:?}", plan.diagnostics);
    let spec = sc.spec_with_nodes(plan.start_time(), *x_hat, plan.inputs.len()).unwrap();
    let c = check_plan(&spec, plan).unwrap();
    assert!(c.initial <= 1e-6, "{c:?}");
    assert!(c.yaw_rate <= 1e-6, "{c:?}");
    assert!(c.terminal_position <= 1e-4 && c.terminal_yaw <= 1e-4 && c.terminal_velocity <= 1e-4, "{c:?}");
    assert!(c.corridor <= 1e-6 && c.force <= 1e-6 * spec.constraints.f_limit, "{c:?}");
    assert_eq!(plan.end_time(), sc.t_end);
}

#[test]
fn hover_session() {
    let sc = presets::hover();
    let mut s = LiveSession::new("h", "hover", sc.t_now, sc.x_hat);
    let plan = plan_session(&mut s, &sc).unwrap();
    assert!(plan.total_energy <= 1.0, "{}", plan.total_energy);
    assert_eq!(s.history.len(), 1);
    assert_eq!(s.active.as_ref(), Some(&plan));
}

#[test]
fn live_crossing_plan_is_feasible() {
    let sc = presets::live_crossing();
    let mut s = LiveSession::new("l", "live", sc.t_now, sc.x_hat);
    let plan = plan_session(&mut s, &sc).unwrap();
    assert_plan_invariants(&sc, &plan, &sc.x_hat);
    assert_eq!(plan.inputs.len(), 40);
}

#[test]
fn start_outside_corridor_fails_and_keeps_plan() {
    let sc = coarse(presets::live_crossing(), 20);
    let mut s = LiveSession::new("o", "live", sc.t_now, sc.x_hat);
    let first = plan_session(&mut s, &sc).unwrap();
    let mut outside = first.state_at(60.0);
    outside.y_l = 400.0;
    let err = update_state(&mut s, &sc, 60.0, outside).unwrap_err();
    assert!(matches!(err, PlanError::Build(_)), "{err}");
    assert_eq!(s.active.as_ref(), Some(&first));
    assert_eq!(s.history.len(), 2);
    assert!(s.history[1].error.is_some() && s.history[1].plan.is_none());
}

#[test]
fn on_plan_update_matches_tail_with_same_step() {
    let mut sc = coarse(presets::live_crossing(), 20);
    sc.shrink = ShrinkMode::KeepStep;
    let mut s = LiveSession::new("d", "live", sc.t_now, sc.x_hat);
    let first = plan_session(&mut s, &sc).unwrap();
    let t = sc.t_now + 0.5 * (sc.t_end - sc.t_now);
    let tail = first.energy_after(t);
    let next = update_state(&mut s, &sc, t, first.state_at(t)).unwrap();
    assert_eq!(next.inputs.len(), 10);
    let rel = (next.total_energy - tail).abs() / tail;
    assert!(rel <= 0.01, "tail {tail}, replan {} ({rel:e})", next.total_energy);
}

#[test]
fn lateral_offset_at_half_horizon() {
    let sc = presets::live_crossing();
    let mut s = LiveSession::new("x", "live", sc.t_now, sc.x_hat);
    let first = plan_session(&mut s, &sc).unwrap();
    let mut off = first.state_at(120.0);
    off.y_l += 50.0;
    let next = update_state(&mut s, &sc, 120.0, off).unwrap();
    assert_eq!(next.end_time() - next.start_time(), 120.0);
    assert_eq!(next.inputs.len(), 40);
    assert_plan_invariants(&sc, &next, &off);
    assert_eq!(s.t, 120.0);
}

#[test]
fn arrival_completes_the_session() {
    let sc = coarse(presets::live_crossing(), 10);
    let mut s = LiveSession::new("c", "live", sc.t_now, sc.x_hat);
    plan_session(&mut s, &sc).unwrap();
    assert!(matches!(update_state(&mut s, &sc, sc.t_end, sc.x_dock), Err(PlanError::SessionComplete { .. })));
    assert!(matches!(update_state(&mut s, &sc, -1.0, sc.x_hat), Err(PlanError::TimeReversal { .. })));
}

#[test]
fn replaying_history_reproduces_plans() {
    let sc = coarse(presets::live_crossing(), 16);
    let mut s = LiveSession::new("r", "live", sc.t_now, sc.x_hat);
    plan_session(&mut s, &sc).unwrap();
    for (i, t) in [40.0, 90.0, 150.0].into_iter().enumerate() {
        let mut x = s.active.as_ref().unwrap().state_at(t);
        x.y_l += 10.0 * (i as f64 + 1.0);
        x.psi -= 0.05;
        update_state(&mut s, &sc, t, x).unwrap();
    }
    let mut fresh = LiveSession::new("r", "live", sc.t_now, sc.x_hat);
    plan_session(&mut fresh, &sc).unwrap();
    for h in &s.history[1..] {
        update_state(&mut fresh, &sc, h.t, h.state).unwrap();
    }
    assert_eq!(serde_json::to_string(&fresh).unwrap(), serde_json::to_string(&s).unwrap());
}

#[test]
fn nudge_from_a_solved_plan() {
    let sc = coarse(presets::live_crossing(), 20);
    let mut s = LiveSession::new("n", "live", sc.t_now, sc.x_hat);
    plan_session(&mut s, &sc).unwrap();
    let plan = s.active.clone().unwrap();
    let n = make_nudge(&s, None, &NudgeConfig::default()).unwrap();
    let cfg = NudgeConfig::default();
    let expect = ferry_core::model::wrap_angle(plan.state_at(cfg.lookahead).psi - s.x_hat.psi);
    assert!((n.heading_delta - expect).abs() < 1e-12);
    assert!(n.speed_delta.abs() < 1e-12);
    assert!(!n.text.is_empty());
}

#[test]
fn pareto_trends() {
    let sc = coarse(presets::transit(600.0), 20);
    let r = pareto_sweep(&sc, &[600.0, 500.0, 400.0], &[0.0]);
    assert_eq!(r.rows.len(), 3);
    assert!(r.rows.iter().all(|row| row.status == RowStatus::Converged), "{r:?}");
    assert!(r.rows[0].total_energy <= r.rows[1].total_energy && r.rows[1].total_energy <= r.rows[2].total_energy);
    assert!(r.monotonicity_violations(0.0).is_empty());

    let head = coarse(presets::head_on(1.0, 480.0), 20);
    let r = pareto_sweep(&head, &[480.0], &[0.0, 0.5, 1.0]);
    assert!(r.rows.iter().all(|row| row.status == RowStatus::Converged), "{r:?}");
    let e: Vec<f64> = r.rows.iter().map(|row| row.total_energy.unwrap()).collect();
    assert!(e[0] <= e[1] && e[1] <= e[2], "{e:?}");
}

#[test]
fn too_fast_crossing_is_a_failed_row() {
    let p = ferry_core::model::FerryParams::default();
    let duration = 300.0;
    // Even at full thrust the still-water top speed is below the mean speed needed.
    assert!(presets::CROSSING_DISTANCE / duration > p.max_speed(p.force_limit()));
    let sc = coarse(presets::transit(600.0), 20);
    let r = pareto_sweep(&sc, &[duration], &[0.0]);
    assert_ne!(r.rows[0].status, RowStatus::Converged);
}

#[test]
fn sweep_rows_keep_grid_order() {
    let sc = coarse(presets::transit(600.0), 6);
    let r = pareto_sweep(&sc, &[600.0, 550.0], &[0.0, 0.5]);
    let grid: Vec<(f64, f64)> = r.rows.iter().map(|row| (row.scaling, row.duration)).collect();
    assert_eq!(grid, vec![(0.0, 600.0), (0.0, 550.0), (0.5, 600.0), (0.5, 550.0)]);
}

#[test]
fn scenario_file_with_relative_csv() {
    let dir = std::env::temp_dir().join(format!("ferry-scenario-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut csv = String::from("x_l,y_l,vx_wind,vy_wind,vx_current,vy_current\n");
    for i in 0..4 {
        for j in 0..3 {
            let (x, y) = (i as f64 * 800.0, j as f64 * 200.0 - 200.0);
            csv.push_str(&format!("{x},{y},0,-11,0,{}\n", 0.1 * (1.0 - ((x - 1263.5) / 1263.5).powi(2))));
        }
    }
    std::fs::write(dir.join("field.csv"), csv).unwrap();
    let mut sc = presets::live_crossing();
    sc.env_model = None;
    sc.env_csv = Some("field.csv".into());
    std::fs::write(dir.join("s.json"), serde_json::to_string_pretty(&sc).unwrap()).unwrap();
    let loaded = Scenario::load(&dir.join("s.json")).unwrap();
    let env = loaded.env().unwrap();
    assert!((env.wind.value([1000.0, 0.0])[1] + 11.0).abs() < 1e-9);
    assert!((env.current.value([1263.5, 0.0])[1] - 0.1).abs() < 1e-9);
    assert!(Scenario::from_json(&serde_json::to_string(&sc).unwrap()).unwrap().env().is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
