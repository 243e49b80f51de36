//! Live planning sessions, operator nudges and Pareto sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ferry_nlp::{IterationRecord, SolveStatus, SolverConfig};

use crate::model::{wrap_angle, State};
use crate::ocp::{solve_ocp_with_observer, warm_start, Diagnostics, OcpError, OcpSpec, TrajectoryPlan};
use crate::scenario::{Scenario, ScenarioError};

pub const HISTORY_SCHEMA_VERSION: u32 = 1;
pub const PARETO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("problem could not be built: {0}")]
    Build(#[from] OcpError),
    #[error("solver stopped with status {:?} after {} iterations", .0.status, .0.iterations)]
    PlanFailed(Diagnostics),
    #[error("session complete: the arrival time {arrival} has been reached")]
    SessionComplete { arrival: f64 },
    #[error("time {t} is before the session time {session_t}")]
    TimeReversal { t: f64, session_t: f64 },
    #[error("the session has no active plan")]
    NoActivePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub t: f64,
    pub state: State,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<TrajectoryPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSession {
    pub schema_version: u32,
    pub id: String,
    pub scenario_id: String,
    pub t: f64,
    pub x_hat: State,
    #[serde(default)]
    pub active: Option<TrajectoryPlan>,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
}

impl LiveSession {
    pub fn new(id: impl Into<String>, scenario_id: impl Into<String>, t: f64, x_hat: State) -> Self {
        LiveSession {
            schema_version: HISTORY_SCHEMA_VERSION,
            id: id.into(),
            scenario_id: scenario_id.into(),
            t,
            x_hat,
            active: None,
            history: Vec::new(),
        }
    }

    fn record(&mut self, outcome: &Result<TrajectoryPlan, PlanError>) {
        let (plan, error) = match outcome {
            Ok(p) => (Some(p.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.history.push(HistoryEntry { t: self.t, state: self.x_hat, plan, error });
    }
}

fn solve_checked<F>(spec: &OcpSpec, warm: Option<&[f64]>, config: &SolverConfig, observer: &mut F) -> Result<TrajectoryPlan, PlanError>
where
    F: FnMut(&IterationRecord),
{
    let (plan, _) = solve_ocp_with_observer(spec, warm, config, &mut *observer)?;
    if plan.converged() {
        Ok(plan)
    } else {
        Err(PlanError::PlanFailed(plan.diagnostics))
    }
}

/// Plans from the session's current time and state with a cold start.
pub fn plan_session(session: &mut LiveSession, scenario: &Scenario) -> Result<TrajectoryPlan, PlanError> {
    plan_session_with_observer(session, scenario, |_| {})
}

pub fn plan_session_with_observer<F>(session: &mut LiveSession, scenario: &Scenario, mut observer: F) -> Result<TrajectoryPlan, PlanError>
where
    F: FnMut(&IterationRecord),
{
    if session.t >= scenario.t_end {
        return Err(PlanError::SessionComplete { arrival: scenario.t_end });
    }
    let outcome = scenario
        .spec_from(session.t, session.x_hat)
        .map_err(PlanError::from)
        .and_then(|spec| solve_checked(&spec, None, &scenario.solver, &mut observer));
    session.record(&outcome);
    if let Ok(plan) = &outcome {
        session.active = Some(plan.clone());
    }
    outcome
}

/// Moves the session to `(t_new, x_new)` and replans over the remaining
/// horizon. The active plan seeds the solver; if that start fails, a cold
/// start is tried before giving up.
pub fn update_state(session: &mut LiveSession, scenario: &Scenario, t_new: f64, x_new: State) -> Result<TrajectoryPlan, PlanError> {
    update_state_with_observer(session, scenario, t_new, x_new, |_| {})
}

pub fn update_state_with_observer<F>(
    session: &mut LiveSession,
    scenario: &Scenario,
    t_new: f64,
    x_new: State,
    mut observer: F,
) -> Result<TrajectoryPlan, PlanError>
where
    F: FnMut(&IterationRecord),
{
    if t_new >= scenario.t_end {
        return Err(PlanError::SessionComplete { arrival: scenario.t_end });
    }
    if t_new < session.t {
        return Err(PlanError::TimeReversal { t: t_new, session_t: session.t });
    }
    session.t = t_new;
    session.x_hat = x_new;
    let Some(previous) = session.active.clone() else {
        return plan_session_with_observer(session, scenario, observer);
    };
    let outcome = (|| {
        let nodes = scenario.replan_nodes(previous.start_time(), previous.inputs.len(), t_new);
        let spec = scenario.spec_with_nodes(t_new, x_new, nodes)?;
        let warm = warm_start(&spec, &previous)?;
        match solve_checked(&spec, Some(&warm), &scenario.solver, &mut observer) {
            Ok(plan) => Ok(plan),
            Err(PlanError::PlanFailed(_)) => solve_checked(&spec, None, &scenario.solver, &mut observer),
            Err(e) => Err(e),
        }
    })();
    session.record(&outcome);
    if let Ok(plan) = &outcome {
        session.active = Some(plan.clone());
    }
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Advise,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nudge {
    /// Suggested yaw change, radians, positive to port.
    pub heading_delta: f64,
    /// Suggested surge change, m/s.
    pub speed_delta: f64,
    pub text: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NudgeConfig {
    /// Seconds ahead of now at which the plan heading is read.
    pub lookahead: f64,
    /// A plan older than this many seconds is stale.
    pub stale_after: f64,
    /// Below these magnitudes a delta is reported as "hold".
    pub heading_deadband: f64,
    pub speed_deadband: f64,
    pub heading_advise: f64,
    pub heading_warn: f64,
    pub speed_advise: f64,
    pub speed_warn: f64,
}

impl Default for NudgeConfig {
    fn default() -> Self {
        NudgeConfig {
            lookahead: 10.0,
            stale_after: 60.0,
            heading_deadband: 2f64.to_radians(),
            speed_deadband: 0.1,
            heading_advise: 5f64.to_radians(),
            heading_warn: 20f64.to_radians(),
            speed_advise: 0.3,
            speed_warn: 1.0,
        }
    }
}

/// Compares the session state with its active plan at time `now`
/// (defaults to the session time).
pub fn make_nudge(session: &LiveSession, now: Option<f64>, config: &NudgeConfig) -> Result<Nudge, PlanError> {
    let plan = session.active.as_ref().ok_or(PlanError::NoActivePlan)?;
    let now = now.unwrap_or(session.t).max(session.t);
    let x = &session.x_hat;
    let ahead = plan.state_at(now + config.lookahead);
    let heading_delta = wrap_angle(ahead.psi - x.psi);
    let speed_delta = plan.state_at(now).u_bf - x.u_bf;

    let mut parts = Vec::new();
    if heading_delta.abs() < config.heading_deadband {
        parts.push("hold heading".to_string());
    } else {
        let side = if heading_delta > 0.0 { "port" } else { "starboard" };
        parts.push(format!("turn {:.0}° to {side}", heading_delta.abs().to_degrees()));
    }
    if speed_delta.abs() < config.speed_deadband {
        parts.push("hold speed".to_string());
    } else if speed_delta > 0.0 {
        parts.push(format!("increase speed by {:.1} m/s", speed_delta));
    } else {
        parts.push(format!("reduce speed by {:.1} m/s", -speed_delta));
    }

    let mut severity = if heading_delta.abs() >= config.heading_warn || speed_delta.abs() >= config.speed_warn {
        Severity::Warn
    } else if heading_delta.abs() >= config.heading_advise || speed_delta.abs() >= config.speed_advise {
        Severity::Advise
    } else {
        Severity::Info
    };
    let mut text = parts.join(", ");
    if now - plan.start_time() > config.stale_after {
        severity = Severity::Warn;
        text = format!("plan is stale, {text}");
    }
    Ok(Nudge { heading_delta, speed_delta, text, severity })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Converged,
    MaxIterations,
    InfeasibleDetected,
    NumericalFailure,
    BuildError,
}

impl From<SolveStatus> for RowStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => RowStatus::Converged,
            SolveStatus::MaxIterations => RowStatus::MaxIterations,
            SolveStatus::InfeasibleDetected => RowStatus::InfeasibleDetected,
            SolveStatus::NumericalFailure => RowStatus::NumericalFailure,
        }
    }
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Converged => "converged",
            RowStatus::MaxIterations => "max_iterations",
            RowStatus::InfeasibleDetected => "infeasible_detected",
            RowStatus::NumericalFailure => "numerical_failure",
            RowStatus::BuildError => "build_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub duration: f64,
    pub scaling: f64,
    /// Absent when the problem could not be built.
    pub total_energy: Option<f64>,
    pub status: RowStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoResult {
    pub schema_version: u32,
    pub rows: Vec<ParetoRow>,
}

/// A pair of converged rows that breaks the expected ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub lower: ParetoRow,
    pub upper: ParetoRow,
}

impl ParetoResult {
    /// Converged rows where a longer duration costs more energy at equal
    /// scaling, or a stronger disturbance costs less at equal duration.
    pub fn monotonicity_violations(&self, rel_tol: f64) -> Vec<MonotonicityViolation> {
        let ok: Vec<&ParetoRow> = self.rows.iter().filter(|r| r.status == RowStatus::Converged).collect();
        let mut out = Vec::new();
        for a in &ok {
            for b in &ok {
                let (ea, eb) = (a.total_energy.unwrap_or(f64::NAN), b.total_energy.unwrap_or(f64::NAN));
                let slack = rel_tol * ea.abs().max(eb.abs());
                let duration_break = a.scaling == b.scaling && a.duration < b.duration && eb > ea + slack;
                let scaling_break = a.duration == b.duration && a.scaling < b.scaling && eb < ea - slack;
                if duration_break || scaling_break {
                    out.push(MonotonicityViolation { lower: (*a).clone(), upper: (*b).clone() });
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema_version,duration_s,scaling,total_energy_j,status,iterations\n");
        for r in &self.rows {
            let energy = r.total_energy.map_or(String::new(), |e| format!("{e:.6}"));
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.schema_version,
                r.duration,
                r.scaling,
                energy,
                r.status.as_str(),
                r.iterations
            ));
        }
        out
    }
}

/// One solve per grid point with both fields scaled by `scaling`, rows
/// ordered by scaling and then duration as given. Points run in parallel.
pub fn pareto_sweep(scenario: &Scenario, durations: &[f64], scalings: &[f64]) -> ParetoResult {
    let grid: Vec<(f64, f64)> = scalings.iter().flat_map(|&s| durations.iter().map(move |&d| (d, s))).collect();
    let rows = grid
        .par_iter()
        .map(|&(duration, scaling)| {
            let spec = scenario.env().map_err(PlanError::from).and_then(|env| {
                let mut sc = scenario.clone();
                sc.env_model = Some(env.scaled(scaling));
                sc.env_csv = None;
                sc.t_end = sc.t_now + duration;
                sc.spec().map_err(PlanError::from)
            });
            let solved = spec.and_then(|spec| solve_ocp_with_observer(&spec, None, &scenario.solver, |_| {}).map_err(PlanError::from));
            match solved {
                Ok((plan, sol)) => ParetoRow {
                    duration,
                    scaling,
                    total_energy: Some(plan.total_energy),
                    status: sol.status.into(),
                    iterations: sol.iterations,
                },
                Err(_) => ParetoRow { duration, scaling, total_energy: None, status: RowStatus::BuildError, iterations: 0 },
            }
        })
        .collect();
    ParetoResult { schema_version: PARETO_SCHEMA_VERSION, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::Diagnostics;

    fn on_plan_session() -> LiveSession {
        let states: Vec<State> = (0..=4).map(|k| State { u_bf: 3.0, ..State::at_rest(30.0 * k as f64, 0.0, 0.0) }).collect();
        let plan = TrajectoryPlan {
            schema_version: 1,
            times: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            states: states.clone(),
            inputs: vec![Default::default(); 4],
            step_energy: vec![0.0; 4],
            total_energy: 0.0,
            objective_value: 0.0,
            diagnostics: Diagnostics {
                status: SolveStatus::Converged,
                iterations: 1,
                kkt_residual: 0.0,
                constraint_violation: 0.0,
                complementarity: 0.0,
                inertia_corrections: 0,
            },
        };
        let mut s = LiveSession::new("s", "c", 0.0, states[0]);
        s.active = Some(plan);
        s
    }

    #[test]
    fn on_plan_is_quiet() {
        let n = make_nudge(&on_plan_session(), None, &NudgeConfig::default()).unwrap();
        assert_eq!(n.severity, Severity::Info);
        assert!(n.heading_delta.abs() < 1e-12 && n.speed_delta.abs() < 1e-12);
        assert_eq!(n.text, "hold heading, hold speed");
    }

    #[test]
    fn slow_vessel_is_told_to_speed_up() {
        let mut s = on_plan_session();
        s.x_hat.u_bf -= 1.0;
        let n = make_nudge(&s, None, &NudgeConfig::default()).unwrap();
        assert!((n.speed_delta - 1.0).abs() < 1e-12);
        assert!(n.text.contains("increase speed"));
        assert_eq!(n.severity, Severity::Warn);
    }

    #[test]
    fn stale_plan_warns() {
        let s = on_plan_session();
        let n = make_nudge(&s, Some(61.0), &NudgeConfig::default()).unwrap();
        assert_eq!(n.severity, Severity::Warn);
        assert!(n.text.starts_with("plan is stale"));
    }

    #[test]
    fn nudge_needs_plan() {
        let s = LiveSession::new("s", "c", 0.0, State::default());
        assert!(matches!(make_nudge(&s, None, &NudgeConfig::default()), Err(PlanError::NoActivePlan)));
    }

    #[test]
    fn heading_to_port_is_positive() {
        let mut s = on_plan_session();
        s.x_hat.psi = -0.5;
        let n = make_nudge(&s, None, &NudgeConfig::default()).unwrap();
        assert!((n.heading_delta - 0.5).abs() < 1e-12);
        assert!(n.text.starts_with("turn 29° to port"));
    }

    #[test]
    fn csv_layout() {
        let r = ParetoResult {
            schema_version: 1,
            rows: vec![
                ParetoRow { duration: 400.0, scaling: 0.5, total_energy: Some(1.5), status: RowStatus::Converged, iterations: 7 },
                ParetoRow { duration: 300.0, scaling: 0.5, total_energy: None, status: RowStatus::BuildError, iterations: 0 },
            ],
        };
        assert_eq!(
            r.to_csv(),
            "schema_version,duration_s,scaling,total_energy_j,status,iterations\n1,400,0.5,1.500000,converged,7\n1,300,0.5,,build_error,0\n"
        );
    }
}
