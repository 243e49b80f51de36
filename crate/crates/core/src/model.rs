//! Simplified three-degree-of-freedom ferry dynamics.
//!
//! The pose `η = (x_l, y_l, ψ)` lives in local ENU coordinates; the velocities
//! `ν = (u, v, r)` are body-fixed and measured over ground. Surge and sway are
//! driven by actuator forces, wind, hydrodynamic damping and the rigid-body
//! Coriolis term; yaw acceleration is commanded directly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::field::{EnvModel, QuadraticField2D};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct State {
    pub x_l: f64,
    pub y_l: f64,
    pub psi: f64,
    pub u_bf: f64,
    pub v_bf: f64,
    pub r_bf: f64,
}

impl From<[f64; 6]> for State {
    fn from(a: [f64; 6]) -> Self {
        State { x_l: a[0], y_l: a[1], psi: a[2], u_bf: a[3], v_bf: a[4], r_bf: a[5] }
    }
}

impl From<State> for [f64; 6] {
    fn from(s: State) -> Self {
        s.to_array()
    }
}

impl State {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x_l, self.y_l, self.psi, self.u_bf, self.v_bf, self.r_bf]
    }

    /// Pose with zero velocities.
    pub fn at_rest(x_l: f64, y_l: f64, psi: f64) -> Self {
        State { x_l, y_l, psi, ..State::default() }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x_l, self.y_l]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct ControlInput {
    pub x_a: f64,
    pub y_a: f64,
    pub rdot_bf: f64,
}

impl From<[f64; 3]> for ControlInput {
    fn from(a: [f64; 3]) -> Self {
        ControlInput { x_a: a[0], y_a: a[1], rdot_bf: a[2] }
    }
}

impl From<ControlInput> for [f64; 3] {
    fn from(u: ControlInput) -> Self {
        u.to_array()
    }
}

impl ControlInput {
    pub fn to_array(&self) -> [f64; 3] {
        [self.x_a, self.y_a, self.rdot_bf]
    }

    pub fn force_norm(&self) -> f64 {
        self.x_a.hypot(self.y_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FerryParams {
    pub m: f64,
    pub X_u: f64,
    pub X_uu: f64,
    pub Y_v: f64,
    pub Y_vv: f64,
    pub A_Fw: f64,
    pub A_Lw: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub rho: f64,
    pub F_AT_max: f64,
    pub c_p_check: f64,
}

impl Default for FerryParams {
    fn default() -> Self {
        FerryParams {
            m: 35000.0,
            X_u: 1470.0,
            X_uu: 753.0,
            Y_v: 10290.0,
            Y_vv: 5272.0,
            A_Fw: 59.2,
            A_Lw: 219.0,
            c_x: 0.59,
            c_y: 0.84,
            rho: 1.204,
            F_AT_max: 24000.0,
            c_p_check: 0.0417,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("force demand {demand} N exceeds the allocation limit {limit} N (feasible scaling {scale})")]
    Saturated { demand: f64, limit: f64, scale: f64 },
    #[error("integration produced a non-finite state")]
    NonFinite,
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
}

impl FerryParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("m", self.m),
            ("X_u", self.X_u),
            ("X_uu", self.X_uu),
            ("Y_v", self.Y_v),
            ("Y_vv", self.Y_vv),
            ("A_Fw", self.A_Fw),
            ("A_Lw", self.A_Lw),
            ("rho", self.rho),
            ("F_AT_max", self.F_AT_max),
            ("c_p_check", self.c_p_check),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        for (name, value) in [("c_x", self.c_x), ("c_y", self.c_y)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Bound on `‖(X_a, Y_a)‖` with both thrusters at full force.
    pub fn force_limit(&self) -> f64 {
        2.0 * self.F_AT_max
    }

    /// Still-water surge drag at speed `u ≥ 0`.
    pub fn surge_drag(&self, u: f64) -> f64 {
        self.X_u * u + self.X_uu * u.abs() * u
    }

    /// Largest still-water surge speed sustainable with force `f`.
    pub fn max_speed(&self, f: f64) -> f64 {
        // X_uu v² + X_u v − f = 0
        (-self.X_u + (self.X_u * self.X_u + 4.0 * self.X_uu * f).sqrt()) / (2.0 * self.X_uu)
    }
}

/// Body-to-ENU transformation `J_ψ`.
pub fn rotation_body_to_enu(psi: f64) -> [[f64; 3]; 3] {
    let (s, c) = psi.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Relative velocity of the hull against a moving medium, in body axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeVelocity {
    pub u_r: f64,
    pub v_r: f64,
    pub gamma_r: f64,
}

pub fn relative_velocity(state: &State, field: &QuadraticField2D) -> RelativeVelocity {
    let f = field.value(state.position());
    let (s, c) = state.psi.sin_cos();
    let u_r = state.u_bf - (c * f[0] + s * f[1]);
    let v_r = state.v_bf - (-s * f[0] + c * f[1]);
    let gamma_r = if u_r == 0.0 && v_r == 0.0 { 0.0 } else { v_r.atan2(u_r) };
    RelativeVelocity { u_r, v_r, gamma_r }
}

/// Modulus damping `D̃`; the dynamics subtract it.
pub fn damping_force(u_r: f64, v_r: f64, params: &FerryParams) -> [f64; 2] {
    [params.X_u * u_r + params.X_uu * u_r.abs() * u_r, params.Y_v * v_r + params.Y_vv * v_r.abs() * v_r]
}

/// Aerodynamic drag on the superstructure.
pub fn wind_force(state: &State, wind: &QuadraticField2D, params: &FerryParams) -> [f64; 2] {
    let rel = relative_velocity(state, wind);
    wind_force_relative(rel.u_r, rel.v_r, params)
}

fn wind_force_relative(u_rw: f64, v_rw: f64, params: &FerryParams) -> [f64; 2] {
    let k = 0.5 * params.rho * u_rw.hypot(v_rw);
    [-k * params.c_x * params.A_Fw * u_rw, -k * params.c_y * params.A_Lw * v_rw]
}

/// `C̃(ν)ν`; the dynamics subtract it.
pub fn coriolis_force(state: &State, params: &FerryParams) -> [f64; 2] {
    [-params.m * state.v_bf * state.r_bf, params.m * state.u_bf * state.r_bf]
}

pub fn dynamics(state: &State, input: &ControlInput, env: &EnvModel, params: &FerryParams) -> [f64; 6] {
    let (s, c) = state.psi.sin_cos();
    let cur = relative_velocity(state, &env.current);
    let d = damping_force(cur.u_r, cur.v_r, params);
    let w = wind_force(state, &env.wind, params);
    let cor = coriolis_force(state, params);
    [
        c * state.u_bf - s * state.v_bf,
        s * state.u_bf + c * state.v_bf,
        state.r_bf,
        (input.x_a + w[0] - cor[0] - d[0]) / params.m,
        (input.y_a + w[1] - cor[1] - d[1]) / params.m,
        input.rdot_bf,
    ]
}

/// Time derivative together with its Jacobians `A = ∂f/∂x` and `B = ∂f/∂u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub f: [f64; 6],
    pub a: [[f64; 6]; 6],
    pub b: [[f64; 3]; 6],
}

/// Velocity of `state` relative to `field` and its derivative with respect
/// to `(x_l, y_l, ψ, u, v)`.
fn relative_with_jacobian(state: &State, field: &QuadraticField2D) -> ([f64; 2], [[f64; 5]; 2]) {
    let e = field.eval(state.position());
    let (s, c) = state.psi.sin_cos();
    let g = [[c, s], [-s, c]];
    let dg = [[-s, c], [-c, -s]];
    let mut rel = [state.u_bf, state.v_bf];
    let mut jac = [[0.0; 5]; 2];
    for i in 0..2 {
        rel[i] -= g[i][0] * e.value[0] + g[i][1] * e.value[1];
        for k in 0..2 {
            jac[i][k] = -(g[i][0] * e.jacobian[0][k] + g[i][1] * e.jacobian[1][k]);
        }
        jac[i][2] = -(dg[i][0] * e.value[0] + dg[i][1] * e.value[1]);
        jac[i][3 + i] = 1.0;
    }
    (rel, jac)
}

pub fn linearize(state: &State, input: &ControlInput, env: &EnvModel, params: &FerryParams) -> Linearization {
    let (s, c) = state.psi.sin_cos();
    let (u, v, r) = (state.u_bf, state.v_bf, state.r_bf);
    let m = params.m;
    let mut a = [[0.0; 6]; 6];
    let mut b = [[0.0; 3]; 6];

    a[0][2] = -s * u - c * v;
    a[0][3] = c;
    a[0][4] = -s;
    a[1][2] = c * u - s * v;
    a[1][3] = s;
    a[1][4] = c;
    a[2][5] = 1.0;

    let (cur, jc) = relative_with_jacobian(state, &env.current);
    let (air, jw) = relative_with_jacobian(state, &env.wind);
    let d = damping_force(cur[0], cur[1], params);
    let dd = [params.X_u + 2.0 * params.X_uu * cur[0].abs(), params.Y_v + 2.0 * params.Y_vv * cur[1].abs()];
    let w = wind_force_relative(air[0], air[1], params);
    let speed = air[0].hypot(air[1]);
    let kw = [0.5 * params.rho * params.c_x * params.A_Fw, 0.5 * params.rho * params.c_y * params.A_Lw];
    // ∂(−k V a_i)/∂a_j = −k (δ_ij V + a_i a_j / V)
    let mut dw = [[0.0; 2]; 2];
    if speed > 0.0 {
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { speed } else { 0.0 };
                dw[i][j] = -kw[i] * (delta + air[i] * air[j] / speed);
            }
        }
    }

    let f = [
        c * u - s * v,
        s * u + c * v,
        r,
        (input.x_a + w[0] + m * v * r - d[0]) / m,
        (input.y_a + w[1] - m * u * r - d[1]) / m,
        input.rdot_bf,
    ];

    for i in 0..2 {
        for k in 0..5 {
            let wind_part = dw[i][0] * jw[0][k] + dw[i][1] * jw[1][k];
            let damp_part = dd[i] * jc[i][k];
            a[3 + i][k] = (wind_part - damp_part) / m;
        }
    }
    a[3][4] += r;
    a[3][5] += v;
    a[4][3] -= r;
    a[4][5] -= u;

    b[3][0] = 1.0 / m;
    b[4][1] = 1.0 / m;
    b[5][2] = 1.0;
    Linearization { f, a, b }
}

fn axpy(x: &[f64; 6], h: f64, k: &[f64; 6]) -> State {
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = x[i] + h * k[i];
    }
    State::from(out)
}

/// One classical Runge-Kutta step with the input held over `dt`.
pub fn rk4_step(state: &State, input: &ControlInput, env: &EnvModel, params: &FerryParams, dt: f64) -> Result<State, ModelError> {
    if !(dt > 0.0) {
        return Err(ModelError::InvalidStep(dt));
    }
    let x = state.to_array();
    let k1 = dynamics(state, input, env, params);
    let k2 = dynamics(&axpy(&x, 0.5 * dt, &k1), input, env, params);
    let k3 = dynamics(&axpy(&x, 0.5 * dt, &k2), input, env, params);
    let k4 = dynamics(&axpy(&x, dt, &k3), input, env, params);
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = State::from(out);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(ModelError::NonFinite)
    }
}

/// `substeps` RK4 steps of length `dt / substeps`.
pub fn integrate(
    state: &State,
    input: &ControlInput,
    env: &EnvModel,
    params: &FerryParams,
    dt: f64,
    substeps: usize,
) -> Result<State, ModelError> {
    let h = dt / substeps.max(1) as f64;
    let mut x = *state;
    for _ in 0..substeps.max(1) {
        x = rk4_step(&x, input, env, params, h)?;
    }
    Ok(x)
}

/// End state of an integrated interval and its sensitivities to the start
/// state and the held input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSensitivity {
    pub end: [f64; 6],
    pub dx: [[f64; 6]; 6],
    pub du: [[f64; 3]; 6],
}

/// RK4 over `substeps` sub-intervals, differentiated exactly (the derivative
/// of the discrete map, not of the continuous flow).
pub fn integrate_with_sensitivity(
    state: &State,
    input: &ControlInput,
    env: &EnvModel,
    params: &FerryParams,
    dt: f64,
    substeps: usize,
) -> StepSensitivity {
    let n = substeps.max(1);
    let h = dt / n as f64;
    let mut x = state.to_array();
    // Columns 0..6 carry ∂x/∂x0, columns 6..9 carry ∂x/∂u.
    let mut sens = [[0.0; 9]; 6];
    for (i, row) in sens.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..n {
        let stage = |xs: &[f64; 6], ss: &[[f64; 9]; 6]| -> ([f64; 6], [[f64; 9]; 6]) {
            let lin = linearize(&State::from(*xs), input, env, params);
            let mut ds = [[0.0; 9]; 6];
            for i in 0..6 {
                for j in 0..9 {
                    let mut acc = if j >= 6 { lin.b[i][j - 6] } else { 0.0 };
                    for k in 0..6 {
                        acc += lin.a[i][k] * ss[k][j];
                    }
                    ds[i][j] = acc;
                }
            }
            (lin.f, ds)
        };
        let shift = |xs: &[f64; 6], ss: &[[f64; 9]; 6], c: f64, k: &[f64; 6], dk: &[[f64; 9]; 6]| {
            let mut xo = [0.0; 6];
            let mut so = [[0.0; 9]; 6];
            for i in 0..6 {
                xo[i] = xs[i] + c * k[i];
                for j in 0..9 {
                    so[i][j] = ss[i][j] + c * dk[i][j];
                }
            }
            (xo, so)
        };
        let (k1, d1) = stage(&x, &sens);
        let (x2, s2) = shift(&x, &sens, 0.5 * h, &k1, &d1);
        let (k2, d2) = stage(&x2, &s2);
        let (x3, s3) = shift(&x, &sens, 0.5 * h, &k2, &d2);
        let (k3, d3) = stage(&x3, &s3);
        let (x4, s4) = shift(&x, &sens, h, &k3, &d3);
        let (k4, d4) = stage(&x4, &s4);
        for i in 0..6 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            for j in 0..9 {
                sens[i][j] += h / 6.0 * (d1[i][j] + 2.0 * d2[i][j] + 2.0 * d3[i][j] + d4[i][j]);
            }
        }
    }
    let mut dx = [[0.0; 6]; 6];
    let mut du = [[0.0; 3]; 6];
    for i in 0..6 {
        dx[i].copy_from_slice(&sens[i][..6]);
        du[i].copy_from_slice(&sens[i][6..]);
    }
    StepSensitivity { end: x, dx, du }
}

/// Electrical power drawn by both thrusters.
pub fn power(input: &ControlInput, params: &FerryParams) -> f64 {
    power_smoothed(input.x_a, input.y_a, params.c_p_check, 0.0)
}

/// `2 č_p ((X² + Y² + ε²)/4)^{3/4}`.
pub fn power_smoothed(x: f64, y: f64, c_p: f64, epsilon: f64) -> f64 {
    let s = 0.25 * (x * x + y * y + epsilon * epsilon);
    2.0 * c_p * s.powf(0.75)
}

/// Gradient and Hessian of [`power_smoothed`] in `(X, Y)`.
pub fn power_derivatives(x: f64, y: f64, c_p: f64, epsilon: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let s = 0.25 * (x * x + y * y + epsilon * epsilon);
    if s == 0.0 {
        return ([0.0; 2], [[0.0; 2]; 2]);
    }
    let g = 0.75 * c_p * s.powf(-0.25);
    let k = -0.09375 * c_p * s.powf(-1.25);
    ([g * x, g * y], [[g + k * x * x, k * x * y], [k * x * y, g + k * y * y]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSetting {
    /// Force per azimuth thruster.
    pub f_at: f64,
    pub alpha: f64,
    /// Propeller speed up to the constant folded into `c_p_check`.
    pub n_at: f64,
}

pub fn allocate_actuators(x_a: f64, y_a: f64, params: &FerryParams) -> Result<ActuatorSetting, ModelError> {
    let demand = x_a.hypot(y_a);
    let limit = params.force_limit();
    if demand > limit {
        return Err(ModelError::Saturated { demand, limit, scale: limit / demand });
    }
    let f_at = 0.5 * demand;
    let alpha = if demand == 0.0 { 0.0 } else { y_a.atan2(x_a) };
    Ok(ActuatorSetting { f_at, alpha, n_at: f_at.sqrt() })
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// The angle equivalent to `target` modulo 2π that is closest to `reference`.
pub fn nearest_equivalent(target: f64, reference: f64) -> f64 {
    reference + wrap_angle(target - reference)
}
