//! Shrinking-horizon optimal control problem and its multiple-shooting
//! transcription.
//!
//! Decision vector layout, in scaled units:
//!
//! ```text
//! [x_0, u_0, x_1, u_1, …, x_{N−1}, u_{N−1}, x_N]      (9N + 6 entries)
//! ```
//!
//! Equalities are ordered initial state (6), continuity per interval (6N) and
//! terminal state (6). Inequalities are the corridor half-planes at every
//! node, node by node, followed by the force bound on every interval.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use ferry_nlp::{NlpSolution, NonlinearProgram, SolveStatus, SolverConfig, SolverError, Triplets};

use crate::corridor::PathConstraintSet;
use crate::field::EnvModel;
use crate::model::{
    integrate_with_sensitivity, nearest_equivalent, power, power_derivatives, power_smoothed, ControlInput,
    FerryParams, ModelError, State,
};

pub const NX: usize = 6;
pub const NU: usize = 3;
const STAGE: usize = NX + NU;

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OcpError {
    #[error("horizon is empty: t_now {t_now} is not before T_end {t_end}")]
    EmptyHorizon { t_now: f64, t_end: f64 },
    #[error("the horizon has expired (t = {t} ≥ T_end = {t_end})")]
    HorizonExpired { t: f64, t_end: f64 },
    #[error("time {t} lies before the current plan start {t_now}")]
    TimeReversal { t: f64, t_now: f64 },
    #[error("N_nodes must be at least 1")]
    NoNodes,
    #[error("weight matrix {name} is not symmetric positive semi-definite")]
    BadWeight { name: &'static str },
    #[error("{which} position ({x:.3}, {y:.3}) lies outside the corridor")]
    OutsideCorridor { which: &'static str, x: f64, y: f64 },
    #[error("{what} is not finite")]
    NonFinite { what: &'static str },
    #[error("power smoothing must be non-negative, got {0}")]
    BadEpsilon(f64),
    #[error("yaw-rate limit must be positive, got {0}")]
    BadYawRateLimit(f64),
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A 3×3 weight given either as its diagonal or as a full matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "WeightJson", into = "WeightJson")]
pub struct Weight(pub [[f64; 3]; 3]);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightJson {
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl From<WeightJson> for Weight {
    fn from(w: WeightJson) -> Self {
        match w {
            WeightJson::Diagonal(d) => Weight::diagonal(d),
            WeightJson::Full(m) => Weight(m),
        }
    }
}

impl From<Weight> for WeightJson {
    fn from(w: Weight) -> Self {
        WeightJson::Full(w.0)
    }
}

impl Weight {
    pub fn diagonal(d: [f64; 3]) -> Self {
        Weight([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn zero() -> Self {
        Weight([[0.0; 3]; 3])
    }

    fn is_psd(&self) -> bool {
        let m = Matrix3::from_fn(|i, j| self.0[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return false;
        }
        SymmetricEigen::new(m).eigenvalues.min() >= -1e-12 * scale
    }

    fn quad(&self, v: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += v[i] * self.0[i][j] * v[j];
            }
        }
        acc
    }
}

/// Default weight on the body velocities `(u, v, r)`.
pub fn default_q() -> Weight {
    Weight::diagonal([0.0, 0.0, 10.0])
}

/// Default weight on `(X_a, Y_a, ṙ)`.
pub fn default_r() -> Weight {
    Weight::diagonal([1e-6, 1e-6, 10.0])
}

pub const DEFAULT_NODES: usize = 40;
pub const DEFAULT_POWER_EPSILON: f64 = 1.0;
pub const DEFAULT_SUBSTEPS: usize = 2;
pub const DEFAULT_YAW_RATE_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub t_now: f64,
    pub t_end: f64,
    pub x_hat: State,
    pub x_dock: State,
    pub env: EnvModel,
    pub params: FerryParams,
    pub constraints: PathConstraintSet,
    pub q: Weight,
    pub r: Weight,
    pub n_nodes: usize,
    pub power_epsilon: f64,
    /// RK4 steps per shooting interval.
    pub substeps: usize,
    /// Bound on `|r|` at nodes 1..=N. Without it the yaw rate is nearly free
    /// and the solver can reach rates at which RK4 no longer tracks the flow.
    pub yaw_rate_limit: Option<f64>,
}

impl OcpSpec {
    pub fn horizon(&self) -> f64 {
        self.t_end - self.t_now
    }

    pub fn dt(&self) -> f64 {
        self.horizon() / self.n_nodes as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_nodes)
            .map(|k| if k == self.n_nodes { self.t_end } else { self.t_now + k as f64 * dt })
            .collect()
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        if !(self.t_now.is_finite() && self.t_end.is_finite()) {
            return Err(OcpError::NonFinite { what: "time" });
        }
        if self.t_now >= self.t_end {
            return Err(OcpError::EmptyHorizon { t_now: self.t_now, t_end: self.t_end });
        }
        if self.n_nodes == 0 {
            return Err(OcpError::NoNodes);
        }
        if !self.x_hat.is_finite() {
            return Err(OcpError::NonFinite { what: "x_hat" });
        }
        if !self.x_dock.is_finite() {
            return Err(OcpError::NonFinite { what: "x_dock" });
        }
        if !(self.power_epsilon >= 0.0 && self.power_epsilon.is_finite()) {
            return Err(OcpError::BadEpsilon(self.power_epsilon));
        }
        if let Some(l) = self.yaw_rate_limit {
            if !(l > 0.0 && l.is_finite()) {
                return Err(OcpError::BadYawRateLimit(l));
            }
        }
        self.params.validate()?;
        if !self.q.is_psd() {
            return Err(OcpError::BadWeight { name: "Q" });
        }
        if !self.r.is_psd() {
            return Err(OcpError::BadWeight { name: "R" });
        }
        for (which, s) in [("x_hat", &self.x_hat), ("x_dock", &self.x_dock)] {
            if !self.constraints.corridor.contains(s.position()) {
                return Err(OcpError::OutsideCorridor { which, x: s.x_l, y: s.y_l });
            }
        }
        Ok(())
    }

    /// The dock pose with its yaw moved to the equivalent angle nearest the
    /// start yaw.
    pub fn dock_target(&self) -> State {
        State { psi: nearest_equivalent(self.x_dock.psi, self.x_hat.psi), ..self.x_dock }
    }
}

/// Scaling between physical quantities and decision variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub state: [f64; NX],
    pub input: [f64; NU],
    /// Physical objective divided by this is what the solver minimizes.
    pub energy: f64,
}

impl Scaling {
    fn for_spec(spec: &OcpSpec) -> Self {
        let f = spec.constraints.f_limit / 10.0;
        let reference_power = power_smoothed(f, 0.0, spec.params.c_p_check, 0.0);
        Scaling {
            state: [10.0, 10.0, 1.0, 1.0, 1.0, 0.1],
            input: [f, f, 0.01],
            energy: reference_power * spec.horizon(),
        }
    }
}

/// The transcribed program.
#[derive(Debug, Clone)]
pub struct OcpNlp {
    spec: OcpSpec,
    dock: State,
    scaling: Scaling,
    dt: f64,
    power_curvature: f64,
}

/// Share of the (negative) radial term kept in the power Hessian. Newton on
/// `|F|^{3/2}` maps `F` to `-F`; keeping less than all of the radial term
/// turns that flip into a contraction.
pub const POWER_CURVATURE: f64 = 0.8;

/// Builds the transcription after validating the spec.
pub fn build_nlp(spec: &OcpSpec) -> Result<OcpNlp, OcpError> {
    spec.validate()?;
    Ok(OcpNlp {
        dock: spec.dock_target(),
        scaling: Scaling::for_spec(spec),
        dt: spec.dt(),
        spec: spec.clone(),
        power_curvature: POWER_CURVATURE,
    })
}

impl OcpNlp {
    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn dock(&self) -> &State {
        &self.dock
    }

    /// Uses the exact Lagrangian Hessian instead of the damped power term.
    pub fn with_exact_hessian(mut self) -> Self {
        self.power_curvature = 1.0;
        self
    }

    fn n(&self) -> usize {
        self.spec.n_nodes
    }

    fn power_hessian(&self, u: &ControlInput) -> [[f64; 2]; 2] {
        let c_p = self.spec.params.c_p_check;
        let eps = self.spec.power_epsilon;
        let (_, exact) = power_derivatives(u.x_a, u.y_a, c_p, eps);
        let s = 0.25 * (u.x_a * u.x_a + u.y_a * u.y_a + eps * eps);
        if s == 0.0 {
            return exact;
        }
        let g = 0.75 * c_p * s.powf(-0.25);
        let mut h = exact;
        for i in 0..2 {
            for j in 0..2 {
                let isotropic = if i == j { g } else { 0.0 };
                h[i][j] = isotropic + self.power_curvature * (exact[i][j] - isotropic);
            }
        }
        h
    }

    fn corridor_rows(&self) -> usize {
        self.spec.constraints.corridor.len()
    }

    fn yaw_rows(&self) -> usize {
        if self.spec.yaw_rate_limit.is_some() { 2 * self.n() } else { 0 }
    }

    fn x_offset(k: usize) -> usize {
        STAGE * k
    }

    fn u_offset(k: usize) -> usize {
        STAGE * k + NX
    }

    fn state(&self, z: &[f64], k: usize) -> State {
        let o = Self::x_offset(k);
        let mut a = [0.0; NX];
        for i in 0..NX {
            a[i] = z[o + i] * self.scaling.state[i];
        }
        State::from(a)
    }

    fn input(&self, z: &[f64], k: usize) -> ControlInput {
        let o = Self::u_offset(k);
        let mut a = [0.0; NU];
        for i in 0..NU {
            a[i] = z[o + i] * self.scaling.input[i];
        }
        ControlInput::from(a)
    }

    /// Packs physical node states and interval inputs into a decision vector.
    pub fn pack(&self, states: &[State], inputs: &[ControlInput]) -> Vec<f64> {
        assert_eq!(states.len(), self.n() + 1);
        assert_eq!(inputs.len(), self.n());
        let mut z = vec![0.0; self.num_variables()];
        for (k, s) in states.iter().enumerate() {
            let a = s.to_array();
            for i in 0..NX {
                z[Self::x_offset(k) + i] = a[i] / self.scaling.state[i];
            }
        }
        for (k, u) in inputs.iter().enumerate() {
            let a = u.to_array();
            for i in 0..NU {
                z[Self::u_offset(k) + i] = a[i] / self.scaling.input[i];
            }
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> (Vec<State>, Vec<ControlInput>) {
        let states = (0..=self.n()).map(|k| self.state(z, k)).collect();
        let inputs = (0..self.n()).map(|k| self.input(z, k)).collect();
        (states, inputs)
    }

    fn step(&self, z: &[f64], k: usize) -> crate::model::StepSensitivity {
        integrate_with_sensitivity(
            &self.state(z, k),
            &self.input(z, k),
            &self.spec.env,
            &self.spec.params,
            self.dt,
            self.spec.substeps,
        )
    }

    /// Physical running cost of interval `k` per unit time.
    fn stage_cost(&self, x: &State, u: &ControlInput) -> f64 {
        let p = &self.spec.params;
        power_smoothed(u.x_a, u.y_a, p.c_p_check, self.spec.power_epsilon)
            + self.spec.q.quad(&[x.u_bf, x.v_bf, x.r_bf])
            + self.spec.r.quad(&u.to_array())
    }

    /// Objective in physical units (joules plus regularization).
    pub fn physical_objective(&self, z: &[f64]) -> f64 {
        (0..self.n()).map(|k| self.dt * self.stage_cost(&self.state(z, k), &self.input(z, k))).sum()
    }

    /// Lower triangle of `Σ_i λ_i ∇²Φ_i` over `(x, u)` in physical units,
    /// by central differences of the exact discrete sensitivities.
    fn dynamics_curvature(&self, x: &State, u: &ControlInput, lambda: &[f64; NX]) -> [[f64; STAGE]; STAGE] {
        let base: Vec<f64> = x.to_array().iter().chain(u.to_array().iter()).copied().collect();
        let scales: Vec<f64> = self.scaling.state.iter().chain(self.scaling.input.iter()).copied().collect();
        let gradient = |xi: &[f64]| -> [f64; STAGE] {
            let xs = State::from([xi[0], xi[1], xi[2], xi[3], xi[4], xi[5]]);
            let us = ControlInput::from([xi[6], xi[7], xi[8]]);
            let sens = integrate_with_sensitivity(&xs, &us, &self.spec.env, &self.spec.params, self.dt, self.spec.substeps);
            let mut g = [0.0; STAGE];
            for i in 0..NX {
                for j in 0..NX {
                    g[j] += lambda[i] * sens.dx[i][j];
                }
                for j in 0..NU {
                    g[NX + j] += lambda[i] * sens.du[i][j];
                }
            }
            g
        };
        let mut h = [[0.0; STAGE]; STAGE];
        let mut xi = base.clone();
        for j in 0..STAGE {
            let step = 1e-5 * scales[j].max(base[j].abs() * 1e-3);
            xi[j] = base[j] + step;
            let gp = gradient(&xi);
            xi[j] = base[j] - step;
            let gm = gradient(&xi);
            xi[j] = base[j];
            for i in 0..STAGE {
                h[i][j] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        for i in 0..STAGE {
            for j in 0..i {
                let avg = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = avg;
                h[j][i] = avg;
            }
        }
        h
    }
}

impl NonlinearProgram for OcpNlp {
    fn num_variables(&self) -> usize {
        STAGE * self.n() + NX
    }

    fn num_equalities(&self) -> usize {
        NX * (self.n() + 2)
    }

    fn num_inequalities(&self) -> usize {
        (self.n() + 1) * self.corridor_rows() + self.n() + self.yaw_rows()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.physical_objective(z) / self.scaling.energy
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let c = self.dt / self.scaling.energy;
        let p = &self.spec.params;
        let q = &self.spec.q.0;
        let r = &self.spec.r.0;
        for k in 0..self.n() {
            let x = self.state(z, k);
            let u = self.input(z, k);
            let nu = [x.u_bf, x.v_bf, x.r_bf];
            let ua = u.to_array();
            let (gp, _) = power_derivatives(u.x_a, u.y_a, p.c_p_check, self.spec.power_epsilon);
            for i in 0..3 {
                let qv: f64 = (0..3).map(|j| 2.0 * q[i][j] * nu[j]).sum();
                grad[Self::x_offset(k) + 3 + i] += c * qv * self.scaling.state[3 + i];
                let mut ru: f64 = (0..3).map(|j| 2.0 * r[i][j] * ua[j]).sum();
                if i < 2 {
                    ru += gp[i];
                }
                grad[Self::u_offset(k) + i] += c * ru * self.scaling.input[i];
            }
        }
    }

    fn equalities(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n();
        let sx = &self.scaling.state;
        let x_hat = self.spec.x_hat.to_array();
        let dock = self.dock.to_array();
        for i in 0..NX {
            out[i] = z[i] - x_hat[i] / sx[i];
        }
        for k in 0..n {
            let end = self.step(z, k).end;
            for i in 0..NX {
                out[NX * (k + 1) + i] = end[i] / sx[i] - z[Self::x_offset(k + 1) + i];
            }
        }
        for i in 0..NX {
            out[NX * (n + 1) + i] = z[Self::x_offset(n) + i] - dock[i] / sx[i];
        }
    }

    fn inequalities(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n();
        let rows = self.corridor_rows();
        let hp = self.spec.constraints.corridor.halfplanes();
        let sx = self.scaling.state[0];
        for k in 0..=n {
            let x = self.state(z, k);
            for (i, h) in hp.iter().enumerate() {
                out[k * rows + i] = h.eval(x.position()) / sx;
            }
        }
        let f2 = self.spec.constraints.f_limit.powi(2);
        for k in 0..n {
            let u = self.input(z, k);
            out[(n + 1) * rows + k] = (u.x_a * u.x_a + u.y_a * u.y_a) / f2 - 1.0;
        }
        if let Some(limit) = self.spec.yaw_rate_limit {
            let base = (n + 1) * rows + n;
            let bound = limit / self.scaling.state[5];
            for k in 1..=n {
                let r = z[Self::x_offset(k) + 5];
                out[base + 2 * (k - 1)] = r - bound;
                out[base + 2 * (k - 1) + 1] = -r - bound;
            }
        }
    }

    fn equality_jacobian(&self, z: &[f64]) -> Triplets {
        let n = self.n();
        let sx = &self.scaling.state;
        let su = &self.scaling.input;
        let mut jac = Triplets::with_capacity(self.num_equalities(), self.num_variables(), NX * (n * (STAGE + 1) + 2));
        for i in 0..NX {
            jac.push(i, i, 1.0);
        }
        for k in 0..n {
            let sens = self.step(z, k);
            let row = NX * (k + 1);
            for i in 0..NX {
                for j in 0..NX {
                    jac.push(row + i, Self::x_offset(k) + j, sens.dx[i][j] * sx[j] / sx[i]);
                }
                for j in 0..NU {
                    jac.push(row + i, Self::u_offset(k) + j, sens.du[i][j] * su[j] / sx[i]);
                }
                jac.push(row + i, Self::x_offset(k + 1) + i, -1.0);
            }
        }
        for i in 0..NX {
            jac.push(NX * (n + 1) + i, Self::x_offset(n) + i, 1.0);
        }
        jac
    }

    fn inequality_jacobian(&self, z: &[f64]) -> Triplets {
        let n = self.n();
        let rows = self.corridor_rows();
        let hp = self.spec.constraints.corridor.halfplanes();
        let mut jac = Triplets::with_capacity(self.num_inequalities(), self.num_variables(), 2 * self.num_inequalities());
        for k in 0..=n {
            for (i, h) in hp.iter().enumerate() {
                // Scaled position over scaled constraint: the factors cancel.
                jac.push(k * rows + i, Self::x_offset(k), h.s);
                jac.push(k * rows + i, Self::x_offset(k) + 1, h.q);
            }
        }
        let f2 = self.spec.constraints.f_limit.powi(2);
        for k in 0..n {
            let u = self.input(z, k);
            jac.push((n + 1) * rows + k, Self::u_offset(k), 2.0 * u.x_a * self.scaling.input[0] / f2);
            jac.push((n + 1) * rows + k, Self::u_offset(k) + 1, 2.0 * u.y_a * self.scaling.input[1] / f2);
        }
        if self.spec.yaw_rate_limit.is_some() {
            let base = (n + 1) * rows + n;
            for k in 1..=n {
                jac.push(base + 2 * (k - 1), Self::x_offset(k) + 5, 1.0);
                jac.push(base + 2 * (k - 1) + 1, Self::x_offset(k) + 5, -1.0);
            }
        }
        jac
    }

    fn lagrangian_hessian(&self, z: &[f64], obj_factor: f64, y: &[f64], w: &[f64]) -> Option<Triplets> {
        let n = self.n();
        let rows = self.corridor_rows();
        let sx = &self.scaling.state;
        let su = &self.scaling.input;
        let scales: Vec<f64> = sx.iter().chain(su.iter()).copied().collect();
        let c = obj_factor * self.dt / self.scaling.energy;
        let f2 = self.spec.constraints.f_limit.powi(2);
        let mut hess = Triplets::with_capacity(self.num_variables(), self.num_variables(), n * STAGE * (STAGE + 1) / 2);
        for k in 0..n {
            let x = self.state(z, k);
            let u = self.input(z, k);
            let mut lambda = [0.0; NX];
            for i in 0..NX {
                lambda[i] = y[NX * (k + 1) + i] / sx[i];
            }
            let mut h = self.dynamics_curvature(&x, &u, &lambda);
            let hp = self.power_hessian(&u);
            for i in 0..3 {
                for j in 0..3 {
                    let qpart = 2.0 * self.spec.q.0[i][j];
                    let mut rpart = 2.0 * self.spec.r.0[i][j];
                    if i < 2 && j < 2 {
                        rpart += hp[i][j];
                    }
                    h[3 + i][3 + j] += c * qpart;
                    h[NX + i][NX + j] += c * rpart;
                }
            }
            let wf = w[(n + 1) * rows + k];
            h[NX][NX] += wf * 2.0 / f2;
            h[NX + 1][NX + 1] += wf * 2.0 / f2;
            let o = Self::x_offset(k);
            for i in 0..STAGE {
                for j in 0..=i {
                    hess.push(o + i, o + j, h[i][j] * scales[i] * scales[j]);
                }
            }
        }
        Some(hess)
    }
}

/// Straight-line guess from `x_hat` to the dock with inverse-dynamics inputs.
pub fn initial_guess(spec: &OcpSpec) -> Result<Vec<f64>, OcpError> {
    let nlp = build_nlp(spec)?;
    let (states, inputs) = guess_trajectory(spec, &nlp.dock);
    Ok(nlp.pack(&states, &inputs))
}

fn guess_trajectory(spec: &OcpSpec, dock: &State) -> (Vec<State>, Vec<ControlInput>) {
    let n = spec.n_nodes;
    let horizon = spec.horizon();
    let a = spec.x_hat;
    let world = [(dock.x_l - a.x_l) / horizon, (dock.y_l - a.y_l) / horizon];
    let yaw_rate = (dock.psi - a.psi) / horizon;
    let mut states = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s = k as f64 / n as f64;
        if k == 0 {
            states.push(a);
        } else if k == n {
            states.push(*dock);
        } else {
            let psi = a.psi + s * (dock.psi - a.psi);
            let (sn, cs) = psi.sin_cos();
            states.push(State {
                x_l: a.x_l + s * (dock.x_l - a.x_l),
                y_l: a.y_l + s * (dock.y_l - a.y_l),
                psi,
                u_bf: cs * world[0] + sn * world[1],
                v_bf: -sn * world[0] + cs * world[1],
                r_bf: yaw_rate,
            });
        }
    }
    let dt = spec.dt();
    let limit = spec.constraints.f_limit;
    let inputs = (0..n)
        .map(|k| inverse_dynamics(&states[k], &states[k + 1], dt, &spec.env, &spec.params, limit))
        .collect();
    (states, inputs)
}

/// Input that produces the velocity change between two nodes under the
/// forces at the first node, with the force clamped to the bound.
fn inverse_dynamics(from: &State, to: &State, dt: f64, env: &EnvModel, params: &FerryParams, limit: f64) -> ControlInput {
    let zero = ControlInput::default();
    let passive = crate::model::dynamics(from, &zero, env, params);
    let mut x_a = params.m * ((to.u_bf - from.u_bf) / dt - passive[3]);
    let mut y_a = params.m * ((to.v_bf - from.v_bf) / dt - passive[4]);
    let norm = x_a.hypot(y_a);
    let cap = 0.99 * limit;
    if norm > cap {
        x_a *= cap / norm;
        y_a *= cap / norm;
    }
    ControlInput { x_a, y_a, rdot_bf: (to.r_bf - from.r_bf) / dt }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub complementarity: f64,
    pub inertia_corrections: usize,
}

impl Diagnostics {
    pub fn from_solution(sol: &NlpSolution) -> Self {
        Diagnostics {
            status: sol.status,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            constraint_violation: sol.constraint_violation,
            complementarity: sol.complementarity,
            inertia_corrections: sol.inertia_corrections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub schema_version: u32,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub inputs: Vec<ControlInput>,
    /// Exact thruster energy per interval, joules.
    pub step_energy: Vec<f64>,
    pub total_energy: f64,
    /// Transcribed objective in physical units, including smoothing and
    /// regularization terms.
    pub objective_value: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("solution vector contains non-finite entries")]
pub struct ExtractError;

pub fn extract_plan(nlp: &OcpNlp, z: &[f64], diagnostics: Diagnostics) -> Result<TrajectoryPlan, ExtractError> {
    if z.len() != nlp.num_variables() || z.iter().any(|v| !v.is_finite()) {
        return Err(ExtractError);
    }
    let (states, inputs) = nlp.unpack(z);
    let dt = nlp.dt;
    let step_energy: Vec<f64> = inputs.iter().map(|u| dt * power(u, &nlp.spec.params)).collect();
    let total_energy = step_energy.iter().sum();
    Ok(TrajectoryPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        times: nlp.spec.times(),
        states,
        inputs,
        step_energy,
        total_energy,
        objective_value: nlp.physical_objective(z),
        diagnostics,
    })
}

impl TrajectoryPlan {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("plans have at least two nodes")
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.times.len() - 1;
        let t = t.clamp(self.times[0], self.times[n]);
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1).min(n - 1);
        let span = self.times[k + 1] - self.times[k];
        (k, ((t - self.times[k]) / span).clamp(0.0, 1.0))
    }

    /// Linear interpolation between node states, clamped to the horizon.
    pub fn state_at(&self, t: f64) -> State {
        let (k, s) = self.bracket(t);
        let a = self.states[k].to_array();
        let b = self.states[k + 1].to_array();
        let mut out = [0.0; NX];
        for i in 0..NX {
            out[i] = a[i] + s * (b[i] - a[i]);
        }
        State::from(out)
    }

    /// Input held on the interval containing `t`.
    pub fn input_at(&self, t: f64) -> ControlInput {
        let (k, s) = self.bracket(t);
        if s >= 1.0 && k + 1 < self.inputs.len() {
            self.inputs[k + 1]
        } else {
            self.inputs[k]
        }
    }

    /// Energy of the plan from `t` to the end, splitting the interval that
    /// contains `t` proportionally.
    pub fn energy_after(&self, t: f64) -> f64 {
        let (k, s) = self.bracket(t);
        (1.0 - s) * self.step_energy[k] + self.step_energy[k + 1..].iter().sum::<f64>()
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.status == SolveStatus::Converged
    }
}

/// Worst violation of the plan against a spec, per constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCheck {
    pub initial: f64,
    pub terminal_position: f64,
    pub terminal_yaw: f64,
    pub terminal_velocity: f64,
    pub continuity: f64,
    pub corridor: f64,
    pub force: f64,
    /// Excess of `|r|` over the yaw-rate bound after the first node; zero
    /// without a bound.
    pub yaw_rate: f64,
}

pub fn check_plan(spec: &OcpSpec, plan: &TrajectoryPlan) -> Result<PlanCheck, OcpError> {
    let nlp = build_nlp(spec)?;
    let dock = nlp.dock;
    let first = plan.states[0].to_array();
    let hat = spec.x_hat.to_array();
    let initial = (0..NX).map(|i| (first[i] - hat[i]).abs()).fold(0.0, f64::max);
    let last = plan.states.last().expect("non-empty plan");
    let terminal_position = (last.x_l - dock.x_l).abs().max((last.y_l - dock.y_l).abs());
    let terminal_yaw = (last.psi - dock.psi).abs();
    let terminal_velocity = (last.u_bf - dock.u_bf).abs().max((last.v_bf - dock.v_bf).abs()).max((last.r_bf - dock.r_bf).abs());
    let dt = spec.dt();
    let mut continuity = 0.0_f64;
    for k in 0..plan.inputs.len() {
        let end = crate::model::integrate(&plan.states[k], &plan.inputs[k], &spec.env, &spec.params, dt, spec.substeps)?;
        let a = end.to_array();
        let b = plan.states[k + 1].to_array();
        for i in 0..NX {
            continuity = continuity.max((a[i] - b[i]).abs());
        }
    }
    let corridor = plan.states.iter().map(|s| -spec.constraints.corridor.margin(s.position())).fold(f64::NEG_INFINITY, f64::max);
    let force = plan.inputs.iter().map(|u| u.force_norm() - spec.constraints.f_limit).fold(f64::NEG_INFINITY, f64::max);
    let yaw_rate = match spec.yaw_rate_limit {
        Some(l) => plan.states[1..].iter().map(|s| s.r_bf.abs() - l).fold(f64::NEG_INFINITY, f64::max),
        None => 0.0,
    };
    Ok(PlanCheck { initial, terminal_position, terminal_yaw, terminal_velocity, continuity, corridor, force, yaw_rate })
}

/// Solves the spec from `warm` or from [`initial_guess`].
pub fn solve_ocp(spec: &OcpSpec, warm: Option<&[f64]>, config: &SolverConfig) -> Result<(TrajectoryPlan, NlpSolution), OcpError> {
    solve_ocp_with_observer(spec, warm, config, |_| {})
}

pub fn solve_ocp_with_observer<F>(
    spec: &OcpSpec,
    warm: Option<&[f64]>,
    config: &SolverConfig,
    observer: F,
) -> Result<(TrajectoryPlan, NlpSolution), OcpError>
where
    F: FnMut(&ferry_nlp::IterationRecord),
{
    let nlp = build_nlp(spec)?;
    let init = match warm {
        Some(z) => z.to_vec(),
        None => {
            let (states, inputs) = guess_trajectory(spec, &nlp.dock);
            nlp.pack(&states, &inputs)
        }
    };
    let sol = ferry_nlp::solve_with_observer(&nlp, &init, config, observer)?;
    let plan = extract_plan(&nlp, &sol.x, Diagnostics::from_solution(&sol)).map_err(|_| OcpError::NonFinite { what: "solution" })?;
    Ok((plan, sol))
}

/// Re-poses the problem at `t_new` from `x_hat_new`, keeping `T_end` and the
/// node count, and samples `previous` at the new node times as a warm start.
pub fn shrink(spec: &OcpSpec, t_new: f64, x_hat_new: State, previous: &TrajectoryPlan) -> Result<(OcpSpec, Vec<f64>), OcpError> {
    if t_new >= spec.t_end {
        return Err(OcpError::HorizonExpired { t: t_new, t_end: spec.t_end });
    }
    if t_new < spec.t_now {
        return Err(OcpError::TimeReversal { t: t_new, t_now: spec.t_now });
    }
    let next = OcpSpec { t_now: t_new, x_hat: x_hat_new, ..spec.clone() };
    let z = warm_start(&next, previous)?;
    Ok((next, z))
}

/// Decision vector for `spec` sampled from `previous`: states interpolated
/// linearly in time, inputs held, first node replaced by `spec.x_hat`.
pub fn warm_start(spec: &OcpSpec, previous: &TrajectoryPlan) -> Result<Vec<f64>, OcpError> {
    let nlp = build_nlp(spec)?;
    let times = spec.times();
    let mut states: Vec<State> = times.iter().map(|&t| previous.state_at(t)).collect();
    // Keep the warm start on the same yaw branch as the new estimate.
    let turns = ((spec.x_hat.psi - states[0].psi) / std::f64::consts::TAU).round() * std::f64::consts::TAU;
    for s in &mut states {
        s.psi += turns;
    }
    states[0] = spec.x_hat;
    let inputs: Vec<ControlInput> = times[..spec.n_nodes].iter().map(|&t| previous.input_at(t)).collect();
    Ok(nlp.pack(&states, &inputs))
}
