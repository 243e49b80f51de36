//! Scenario files and the synthetic presets used by tests and examples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ferry_nlp::SolverConfig;

use crate::corridor::{Corridor, CorridorError, ForceLimitPreset, PathConstraintSet};
use crate::field::{parse_samples, EnvModel, FieldError, QuadraticField2D};
use crate::model::{FerryParams, State};
use crate::ocp::{default_q, default_r, OcpSpec, Weight, DEFAULT_NODES, DEFAULT_POWER_EPSILON, DEFAULT_YAW_RATE_LIMIT};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("environment samples: {0}")]
    Field(#[from] FieldError),
    #[error(transparent)]
    Corridor(#[from] CorridorError),
    #[error("give at most one of env_model and env_csv")]
    AmbiguousEnvironment,
    #[error("env_csv {0} has not been resolved; load the scenario from a file")]
    UnresolvedEnvironment(String),
    #[error("dock {index} at ({x:.3}, {y:.3}) lies outside the corridor")]
    DockOutside { index: usize, x: f64, y: f64 },
    #[error("arrival time {t_end} must be after departure {t_now}")]
    BadSchedule { t_now: f64, t_end: f64 },
}

fn default_params() -> FerryParams {
    FerryParams::default()
}
fn default_nodes() -> usize {
    DEFAULT_NODES
}
fn default_epsilon() -> f64 {
    DEFAULT_POWER_EPSILON
}

fn default_yaw_rate_limit() -> Option<f64> {
    Some(DEFAULT_YAW_RATE_LIMIT)
}

/// Everything needed to pose one dock-to-dock problem.
///
/// `substeps = 0` picks enough RK4 sub-steps that none is longer than
/// [`MAX_SUBSTEP`] seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default = "default_params")]
    pub params: FerryParams,
    pub corridor: Corridor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_model: Option<EnvModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_csv: Option<String>,
    pub x_hat: State,
    pub x_dock: State,
    /// Berth poses `(x, y, ψ)` shown on the map; defaults to the start and
    /// target poses.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub docks: Vec<[f64; 3]>,
    pub t_now: f64,
    #[serde(rename = "T_end")]
    pub t_end: f64,
    #[serde(rename = "N_nodes", default = "default_nodes")]
    pub n_nodes: usize,
    #[serde(rename = "Q", default = "default_q")]
    pub q: Weight,
    #[serde(rename = "R", default = "default_r")]
    pub r: Weight,
    #[serde(default = "default_epsilon")]
    pub power_epsilon: f64,
    #[serde(default)]
    pub substeps: usize,
    /// rad/s; `null` removes the bound.
    #[serde(default = "default_yaw_rate_limit")]
    pub yaw_rate_limit: Option<f64>,
    #[serde(default)]
    pub force_limit: ForceLimitPreset,
    #[serde(default)]
    pub shrink: ShrinkMode,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified: Option<String>,
}

/// How a replan discretizes the remaining horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkMode {
    /// Same node count, shorter intervals.
    #[default]
    KeepNodes,
    /// Same interval length, fewer nodes.
    KeepStep,
}

/// Longest RK4 sub-step chosen automatically, seconds.
pub const MAX_SUBSTEP: f64 = 1.0;

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        if s.env_model.is_some() && s.env_csv.is_some() {
            return Err(ScenarioError::AmbiguousEnvironment);
        }
        Ok(s)
    }

    /// Reads a scenario file; an `env_csv` path is resolved against the
    /// file's directory and fitted.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        let mut s = Scenario::from_json(&text)?;
        if let Some(csv) = s.env_csv.take() {
            let p = path.parent().unwrap_or(Path::new(".")).join(&csv);
            let file = std::fs::File::open(&p).map_err(|source| ScenarioError::Io { path: p.display().to_string(), source })?;
            let samples = parse_samples(file)?;
            s.env_model = Some(EnvModel::fit(&samples)?);
        }
        Ok(s)
    }

    pub fn env(&self) -> Result<EnvModel, ScenarioError> {
        match (&self.env_model, &self.env_csv) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(csv)) => Err(ScenarioError::UnresolvedEnvironment(csv.clone())),
            (None, None) => Ok(EnvModel::calm()),
        }
    }

    pub fn dock_poses(&self) -> Vec<[f64; 3]> {
        if self.docks.is_empty() {
            vec![[self.x_hat.x_l, self.x_hat.y_l, self.x_hat.psi], [self.x_dock.x_l, self.x_dock.y_l, self.x_dock.psi]]
        } else {
            self.docks.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.t_end > self.t_now) {
            return Err(ScenarioError::BadSchedule { t_now: self.t_now, t_end: self.t_end });
        }
        for (index, d) in self.dock_poses().iter().enumerate() {
            if self.corridor.margin([d[0], d[1]]) <= 0.0 {
                return Err(ScenarioError::DockOutside { index, x: d[0], y: d[1] });
            }
        }
        self.env()?;
        Ok(())
    }

    pub fn substeps_for(&self, dt: f64) -> usize {
        if self.substeps > 0 {
            self.substeps
        } else {
            ((dt / MAX_SUBSTEP).ceil() as usize).max(1)
        }
    }

    /// Node count for a replan at `t_new` that follows a plan with
    /// `previous_nodes` intervals starting at `previous_start`.
    pub fn replan_nodes(&self, previous_start: f64, previous_nodes: usize, t_new: f64) -> usize {
        match self.shrink {
            ShrinkMode::KeepNodes => previous_nodes,
            ShrinkMode::KeepStep => {
                let dt = (self.t_end - previous_start) / previous_nodes.max(1) as f64;
                (((self.t_end - t_new) / dt).round() as usize).max(1)
            }
        }
    }

    /// The spec a session plan was solved against.
    pub fn spec_for_plan(&self, plan: &crate::ocp::TrajectoryPlan) -> Result<OcpSpec, ScenarioError> {
        self.spec_with_nodes(plan.start_time(), plan.states[0], plan.inputs.len())
    }

    /// The optimal control problem from `x_hat` at `t_now`.
    pub fn spec(&self) -> Result<OcpSpec, ScenarioError> {
        self.spec_from(self.t_now, self.x_hat)
    }

    pub fn spec_from(&self, t_now: f64, x_hat: State) -> Result<OcpSpec, ScenarioError> {
        self.spec_with_nodes(t_now, x_hat, self.n_nodes)
    }

    pub fn spec_with_nodes(&self, t_now: f64, x_hat: State, n_nodes: usize) -> Result<OcpSpec, ScenarioError> {
        let f_limit = self.force_limit.limit(&self.params);
        let dt = (self.t_end - t_now) / n_nodes.max(1) as f64;
        Ok(OcpSpec {
            t_now,
            t_end: self.t_end,
            x_hat,
            x_dock: self.x_dock,
            env: self.env()?,
            params: self.params,
            constraints: PathConstraintSet::new(self.corridor.clone(), f_limit)?,
            q: self.q,
            r: self.r,
            n_nodes,
            power_epsilon: self.power_epsilon,
            substeps: self.substeps_for(dt),
            yaw_rate_limit: self.yaw_rate_limit,
        })
    }
}

/// Synthetic corridor, docks and disturbances of the same scale as the
/// reference crossing (about 2.5 km by 0.5 km).
pub mod presets {
    use super::*;

    pub const CROSSING_DISTANCE: f64 = 2527.0;

    pub fn corridor() -> Corridor {
        Corridor::from_polygon(&[
            [-100.0, -250.0],
            [CROSSING_DISTANCE + 100.0, -250.0],
            [CROSSING_DISTANCE + 170.0, 0.0],
            [CROSSING_DISTANCE + 100.0, 250.0],
            [-100.0, 250.0],
            [-170.0, 0.0],
        ])
        .expect("preset polygon is convex")
    }

    fn base(x_hat: State, x_dock: State, t_end: f64, env: EnvModel) -> Scenario {
        Scenario {
            schema_version: Some(SCENARIO_SCHEMA_VERSION),
            id: None,
            params: FerryParams::default(),
            corridor: corridor(),
            env_model: Some(env),
            env_csv: None,
            x_hat,
            x_dock,
            docks: vec![[0.0, 0.0, 0.0], [CROSSING_DISTANCE, 0.0, 0.0]],
            t_now: 0.0,
            t_end,
            n_nodes: DEFAULT_NODES,
            q: default_q(),
            r: default_r(),
            power_epsilon: DEFAULT_POWER_EPSILON,
            substeps: 0,
            yaw_rate_limit: default_yaw_rate_limit(),
            force_limit: ForceLimitPreset::default(),
            shrink: ShrinkMode::default(),
            solver: SolverConfig::default(),
            created: None,
            modified: None,
        }
    }

    /// At rest on the departure berth, no disturbance.
    pub fn hover() -> Scenario {
        let dock = State::at_rest(0.0, 0.0, 0.0);
        base(dock, dock, 240.0, EnvModel::calm())
    }

    /// Dock to dock in still conditions.
    pub fn transit(duration: f64) -> Scenario {
        base(State::at_rest(0.0, 0.0, 0.0), State::at_rest(CROSSING_DISTANCE, 0.0, 0.0), duration, EnvModel::calm())
    }

    /// Northward current peaking mid-crossing, `amplitude` m/s, quadratic
    /// in the along-track coordinate.
    pub fn mid_channel_current(amplitude: f64) -> QuadraticField2D {
        let c = 0.5 * CROSSING_DISTANCE;
        // a (1 − (x − c)²/c²) = a (2x/c − x²/c²)
        QuadraticField2D::new([[[0.0; 2]; 2], [[-2.0 * amplitude / (c * c), 0.0], [0.0, 0.0]]], [[0.0; 2], [2.0 * amplitude / c, 0.0]], [0.0; 2])
    }

    /// Steady north wind of 11 m/s and the mid-channel current of
    /// 0.1 m/s; the ferry is underway 1000 m short of the berth with 240 s
    /// to go.
    pub fn live_crossing() -> Scenario {
        let env = EnvModel::new(QuadraticField2D::uniform([0.0, -11.0]), mid_channel_current(0.1));
        let start = State { u_bf: 4.0, ..State::at_rest(CROSSING_DISTANCE - 1000.0, 0.0, 0.0) };
        base(start, State::at_rest(CROSSING_DISTANCE, 0.0, 0.0), 240.0, env)
    }

    /// Wind and current against the direction of travel, `scaling` of
    /// 13 m/s and 0.2 m/s.
    pub fn head_on(scaling: f64, duration: f64) -> Scenario {
        let env = EnvModel::new(QuadraticField2D::uniform([-13.0, 0.0]), QuadraticField2D::uniform([-0.2, 0.0])).scaled(scaling);
        base(State::at_rest(0.0, 0.0, 0.0), State::at_rest(CROSSING_DISTANCE, 0.0, 0.0), duration, env)
    }
}
