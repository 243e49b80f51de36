//! Primal-dual interior-point method with an ℓ1 exact-penalty merit line
//! search.
//!
//! Inequalities `g(z) <= 0` are turned into `g(z) + s = 0, s > 0` and the
//! slacks are kept strictly positive by a log barrier whose weight `μ` is
//! driven to zero with the monotone Fiacco-McCormick rule. Each Newton step
//! solves the condensed KKT system
//!
//! ```text
//! [ H + J_gᵀ Σ J_g + δ_w I    J_cᵀ  ] [Δz]   [ -∇f - J_cᵀy - J_gᵀ(μ/s + Σ (g + s)) ]
//! [ J_c                      -δ_c I ] [Δy] = [ -c                                  ]
//! ```
//!
//! with `Σ = diag(w / s)`. The regularization `δ_w` is raised until the
//! factorization reports `n` positive and `m_eq` negative eigenvalues, so the
//! step is a descent direction for the merit function.

use log::{debug, trace};
use serde::{Deserialize, Serialize};

use crate::kkt::{kkt_residuals, KktResiduals};
use crate::ldl::{Inertia, LdlFactor, SymMatrix};
use crate::problem::{finite_difference_hessian, NonlinearProgram};
use crate::sparse::Triplets;
use crate::SolverError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Bound on stationarity, dual infeasibility and complementarity.
    pub kkt_tolerance: f64,
    /// Bound on the constraint violation.
    pub constraint_tolerance: f64,
    pub max_iterations: usize,
    /// Smallest Hessian shift tried once a correction has been needed.
    pub regularization_floor: f64,
    /// First Hessian shift tried when the inertia is wrong.
    pub initial_regularization: f64,
    pub mu_init: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step contraction factor during backtracking.
    pub backtrack: f64,
    /// Backtracking gives up below this step length.
    pub min_step: f64,
    /// A penalty weight above this with constraints still violated is taken
    /// as evidence of infeasibility.
    pub max_penalty: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            constraint_tolerance: 1e-6,
            max_iterations: 500,
            regularization_floor: 1e-20,
            initial_regularization: 1e-4,
            mu_init: 0.1,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-14,
            max_penalty: 1e10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("kkt_tolerance", self.kkt_tolerance),
            ("constraint_tolerance", self.constraint_tolerance),
            ("regularization_floor", self.regularization_floor),
            ("initial_regularization", self.initial_regularization),
            ("mu_init", self.mu_init),
            ("armijo", self.armijo),
            ("min_step", self.min_step),
            ("max_penalty", self.max_penalty),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "backtrack must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    InfeasibleDetected,
    NumericalFailure,
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_infeasibility: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub mu: f64,
    /// Primal step length accepted at the end of this iteration.
    pub step_size: f64,
    pub regularization: f64,
}

impl IterationRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{:4} {:+.8e} {:.2e} {:.2e} {:.2e} {:.1e} {:.2e} {:.1e}",
            self.iteration,
            self.objective,
            self.primal_infeasibility,
            self.stationarity,
            self.complementarity,
            self.mu,
            self.step_size,
            self.regularization
        )
    }
}

/// Merit value of an accepted iterate. Values are only comparable inside one
/// phase; a new phase starts whenever the barrier weight or the penalty
/// weight changes, or a step is taken without the sufficient-decrease test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeritRecord {
    pub iteration: usize,
    pub phase: usize,
    pub merit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    /// `max(stationarity, dual, complementarity)` from [`kkt_residuals`].
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub complementarity: f64,
    pub iterations: usize,
    pub inertia_corrections: usize,
    pub merit_trace: Vec<MeritRecord>,
}

impl NlpSolution {
    pub fn residuals<P: NonlinearProgram + ?Sized>(&self, problem: &P) -> KktResiduals {
        kkt_residuals(problem, &self.x, &self.eq_multipliers, &self.ineq_multipliers)
    }
}

pub fn solve<P: NonlinearProgram + ?Sized>(
    problem: &P,
    init: &[f64],
    config: &SolverConfig,
) -> Result<NlpSolution, SolverError> {
    solve_with_observer(problem, init, config, |_| {})
}

struct Point {
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    g: Vec<f64>,
    jc: Triplets,
    jg: Triplets,
}

fn evaluate<P: NonlinearProgram + ?Sized>(problem: &P, z: &[f64]) -> Point {
    let mut grad = vec![0.0; problem.num_variables()];
    problem.gradient(z, &mut grad);
    let (c, g) = constraints(problem, z);
    Point {
        f: problem.objective(z),
        grad,
        c,
        g,
        jc: problem.equality_jacobian(z),
        jg: problem.inequality_jacobian(z),
    }
}

fn constraints<P: NonlinearProgram + ?Sized>(problem: &P, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; problem.num_equalities()];
    problem.equalities(z, &mut c);
    let mut g = vec![0.0; problem.num_inequalities()];
    problem.inequalities(z, &mut g);
    (c, g)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// ℓ1 merit `f − μ Σ ln s + ν (‖c‖₁ + ‖g + s‖₁)` and its infeasibility part.
const MAX_PENALTY_DROPS: usize = 3;

fn merit(f: f64, c: &[f64], g: &[f64], s: &[f64], mu: f64, nu: f64) -> (f64, f64) {
    let theta = one_norm(c) + g.iter().zip(s).map(|(g, s)| (g + s).abs()).sum::<f64>();
    let barrier: f64 = s.iter().map(|s| s.ln()).sum();
    (f - mu * barrier + nu * theta, theta)
}

/// Largest `α ∈ (0, 1]` keeping `v + α dv >= (1 − τ) v`.
fn fraction_to_boundary(v: &[f64], dv: &[f64], tau: f64) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .fold(1.0_f64, |a, (v, d)| a.min(-tau * v / d))
}

/// Lower-triangle quadratic form `xᵀ H x` for a symmetric `H` stored as its
/// lower triangle.
fn sym_quad(h: &Triplets, x: &[f64]) -> f64 {
    h.entries()
        .iter()
        .map(|&(i, j, v)| if i == j { v * x[i] * x[i] } else { 2.0 * v * x[i] * x[j] })
        .sum()
}

struct KktSystem {
    base: SymMatrix,
    n: usize,
    me: usize,
}

impl KktSystem {
    fn assemble(n: usize, me: usize, hess: &Triplets, jc: &Triplets, jg: &Triplets, sigma: &[f64]) -> Self {
        let mut base = SymMatrix::zeros(n + me);
        for &(i, j, v) in hess.entries() {
            base.add(i, j, v);
        }
        for (row, sig) in jg.rows().iter().zip(sigma) {
            for (a, &(ca, va)) in row.iter().enumerate() {
                for &(cb, vb) in &row[..=a] {
                    base.add(ca, cb, sig * va * vb);
                }
            }
        }
        for &(r, c, v) in jc.entries() {
            base.add(n + r, c, v);
        }
        Self { base, n, me }
    }

    fn factor(&self, delta_w: f64, delta_c: f64) -> LdlFactor {
        let mut k = self.base.clone();
        for i in 0..self.n {
            k.add(i, i, delta_w);
        }
        for i in 0..self.me {
            k.add(self.n + i, self.n + i, -delta_c);
        }
        let tol = 1e-14 * k.max_abs().max(1.0);
        LdlFactor::factor(k, tol)
    }
}

struct Regularizer {
    last_delta_w: f64,
}

pub fn solve_with_observer<P, F>(
    problem: &P,
    init: &[f64],
    config: &SolverConfig,
    mut observer: F,
) -> Result<NlpSolution, SolverError>
where
    P: NonlinearProgram + ?Sized,
    F: FnMut(&IterationRecord),
{
    config.validate()?;
    let n = problem.num_variables();
    let me = problem.num_equalities();
    let mi = problem.num_inequalities();
    if init.len() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: init.len(),
        });
    }

    let mut z = init.to_vec();
    let mut pt = evaluate(problem, &z);
    if !pt.f.is_finite() || !all_finite(&pt.grad) || !all_finite(&pt.c) || !all_finite(&pt.g) {
        return Err(SolverError::NonFiniteStart);
    }

    let kappa_eps = 10.0;
    let kappa_mu = 0.2;
    let theta_mu = 1.5;
    let kappa_sigma = 1e10;
    let mu_min = config.kkt_tolerance.min(config.constraint_tolerance) / 10.0;

    let mut mu = config.mu_init;
    let mut s: Vec<f64> = pt.g.iter().map(|g| (-g).max(1e-2 * g.abs().max(1.0))).collect();
    let mut w: Vec<f64> = s.iter().map(|s| mu / s).collect();
    let mut y = vec![0.0; me];
    let mut nu = 1.0_f64;

    // Least-squares equality multipliers for the initial point.
    if me > 0 {
        let identity = {
            let mut t = Triplets::new(n, n);
            (0..n).for_each(|i| t.push(i, i, 1.0));
            t
        };
        let sys = KktSystem::assemble(n, me, &identity, &pt.jc, &Triplets::new(0, n), &[]);
        let fac = sys.factor(0.0, 1e-12);
        if fac.inertia().zero == 0 {
            let mut rhs = vec![0.0; n + me];
            let mut jgw = vec![0.0; n];
            pt.jg.mul_transpose_vec(&w, &mut jgw);
            for i in 0..n {
                rhs[i] = -(pt.grad[i] + jgw[i]);
            }
            fac.solve_in_place(&mut rhs);
            let y_ls = &rhs[n..];
            if all_finite(y_ls) && inf_norm(y_ls) <= 1e3 {
                y.copy_from_slice(y_ls);
            }
        }
    }

    let mut reg = Regularizer { last_delta_w: 0.0 };
    let mut phase = 0usize;
    let mut penalty_drops = 0usize;
    let mut merit_trace = Vec::new();
    let mut inertia_corrections = 0usize;
    let mut iteration = 0usize;
    let mut last_alpha = 0.0;
    let mut last_delta = 0.0;
    let mut trace_needs_start = true;

    let status = loop {
        let mut r_d = pt.grad.clone();
        let mut tmp = vec![0.0; n];
        if me > 0 {
            pt.jc.mul_transpose_vec(&y, &mut tmp);
            r_d.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        if mi > 0 {
            pt.jg.mul_transpose_vec(&w, &mut tmp);
            r_d.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        let r_g: Vec<f64> = pt.g.iter().zip(&s).map(|(g, s)| g + s).collect();
        let stationarity = inf_norm(&r_d);
        let true_primal = inf_norm(&pt.c).max(pt.g.iter().fold(0.0_f64, |m, g| m.max(*g)));
        let true_compl = w.iter().zip(&pt.g).fold(0.0_f64, |m, (w, g)| m.max((w * g).abs()));

        let record = IterationRecord {
            iteration,
            objective: pt.f,
            primal_infeasibility: true_primal,
            stationarity,
            complementarity: true_compl,
            mu,
            step_size: last_alpha,
            regularization: last_delta,
        };
        trace!("{}", record.log_line());
        observer(&record);

        if stationarity <= config.kkt_tolerance
            && true_primal <= config.constraint_tolerance
            && true_compl <= config.kkt_tolerance
        {
            break SolveStatus::Converged;
        }
        if iteration >= config.max_iterations {
            break SolveStatus::MaxIterations;
        }

        // Barrier update.
        loop {
            let e_mu = stationarity
                .max(inf_norm(&pt.c))
                .max(inf_norm(&r_g))
                .max(s.iter().zip(&w).fold(0.0_f64, |m, (s, w)| m.max((s * w - mu).abs())));
            if mu > mu_min && e_mu <= kappa_eps * mu {
                mu = mu_min.max((kappa_mu * mu).min(mu.powf(theta_mu)));
                penalty_drops = 0;
                trace_needs_start = true;
            } else {
                break;
            }
        }

        if trace_needs_start {
            phase += 1;
            let (phi, _) = merit(pt.f, &pt.c, &pt.g, &s, mu, nu);
            merit_trace.push(MeritRecord { iteration, phase, merit: phi });
            trace_needs_start = false;
        }

        let hess = problem
            .lagrangian_hessian(&z, 1.0, &y, &w)
            .unwrap_or_else(|| finite_difference_hessian(problem, &z, 1.0, &y, &w));
        let sigma: Vec<f64> = w.iter().zip(&s).map(|(w, s)| w / s).collect();
        let sys = KktSystem::assemble(n, me, &hess, &pt.jc, &pt.jg, &sigma);

        // Inertia correction.
        let target = Inertia {
            positive: n,
            negative: me,
            zero: 0,
        };
        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        let mut fac = sys.factor(0.0, 0.0);
        if fac.inertia() != target {
            inertia_corrections += 1;
            if fac.inertia().zero > 0 {
                delta_c = 1e-8 * mu.powf(0.25);
            }
            delta_w = if reg.last_delta_w == 0.0 {
                config.initial_regularization
            } else {
                config.regularization_floor.max(reg.last_delta_w / 3.0)
            };
            loop {
                fac = sys.factor(delta_w, delta_c);
                if fac.inertia() == target {
                    break;
                }
                if fac.inertia().zero > 0 && delta_c == 0.0 {
                    delta_c = 1e-8 * mu.powf(0.25);
                }
                delta_w *= if reg.last_delta_w == 0.0 { 100.0 } else { 8.0 };
                if delta_w > 1e40 {
                    break;
                }
            }
            if delta_w > 1e40 {
                debug!("inertia correction failed at iteration {iteration}");
                break SolveStatus::NumericalFailure;
            }
            debug!(
                "iteration {iteration}: inertia corrected with delta_w = {delta_w:.2e}, delta_c = {delta_c:.2e}"
            );
            reg.last_delta_w = delta_w;
        }
        last_delta = delta_w;

        // Newton direction.
        let mut rhs = vec![0.0; n + me];
        let aux: Vec<f64> = (0..mi).map(|i| mu / s[i] + sigma[i] * r_g[i]).collect();
        let mut jg_aux = vec![0.0; n];
        if mi > 0 {
            pt.jg.mul_transpose_vec(&aux, &mut jg_aux);
        }
        let mut jc_y = vec![0.0; n];
        if me > 0 {
            pt.jc.mul_transpose_vec(&y, &mut jc_y);
        }
        for i in 0..n {
            rhs[i] = -(pt.grad[i] + jc_y[i] + jg_aux[i]);
        }
        for i in 0..me {
            rhs[n + i] = -pt.c[i];
        }
        fac.solve_in_place(&mut rhs);
        if !all_finite(&rhs) {
            break SolveStatus::NumericalFailure;
        }
        let dz = rhs[..n].to_vec();
        let dy = rhs[n..].to_vec();
        let mut jg_dz = vec![0.0; mi];
        if mi > 0 {
            pt.jg.mul_vec(&dz, &mut jg_dz);
        }
        let ds: Vec<f64> = (0..mi).map(|i| -r_g[i] - jg_dz[i]).collect();
        let dw: Vec<f64> = (0..mi).map(|i| mu / s[i] - w[i] - sigma[i] * ds[i]).collect();

        let tau = (1.0 - mu).max(0.99);
        let alpha_max = fraction_to_boundary(&s, &ds, tau);
        let alpha_w = fraction_to_boundary(&w, &dw, tau);

        // Penalty update.
        let (phi0, theta0) = merit(pt.f, &pt.c, &pt.g, &s, mu, nu);
        let barrier_slope = dot(&pt.grad, &dz) - (0..mi).map(|i| mu * ds[i] / s[i]).sum::<f64>();
        if theta0 > 0.0 {
            let quad = sym_quad(&hess, &dz)
                + (0..mi).map(|i| sigma[i] * ds[i] * ds[i]).sum::<f64>()
                + delta_w * dot(&dz, &dz);
            let nu_req = (barrier_slope + 0.5 * quad.max(0.0)) / (0.9 * theta0);
            // The weight only has to dominate the multipliers; an early
            // oversized weight is lowered a bounded number of times per
            // barrier value.
            let multiplier_bound = (0..me)
                .map(|i| (y[i] + dy[i]).abs())
                .chain((0..mi).map(|i| (w[i] + dw[i]).abs()))
                .fold(0.0_f64, f64::max);
            let nu_floor = 1.1 * nu_req.max(2.0 * multiplier_bound).max(1e-6) + 1e-8;
            if nu < nu_req {
                nu = 1.1 * nu_req + 1e-8;
                phase += 1;
                let (phi, _) = merit(pt.f, &pt.c, &pt.g, &s, mu, nu);
                merit_trace.push(MeritRecord { iteration, phase, merit: phi });
            } else if nu > 10.0 * nu_floor && penalty_drops < MAX_PENALTY_DROPS {
                nu = nu_floor;
                penalty_drops += 1;
                phase += 1;
                let (phi, _) = merit(pt.f, &pt.c, &pt.g, &s, mu, nu);
                merit_trace.push(MeritRecord { iteration, phase, merit: phi });
            }
        }
        if nu > config.max_penalty && true_primal > config.constraint_tolerance {
            debug!("penalty weight {nu:.2e} exceeded its bound");
            break SolveStatus::InfeasibleDetected;
        }
        let (phi0, _) = if theta0 > 0.0 { merit(pt.f, &pt.c, &pt.g, &s, mu, nu) } else { (phi0, theta0) };
        let slope = barrier_slope - nu * theta0;

        let tiny = dz.iter().zip(&z).all(|(d, z)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + z.abs()));

        let mut accepted: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        if tiny {
            let zt: Vec<f64> = z.iter().zip(&dz).map(|(z, d)| z + alpha_max * d).collect();
            let st: Vec<f64> = s.iter().zip(&ds).map(|(s, d)| s + alpha_max * d).collect();
            accepted = Some((zt, st, alpha_max));
            trace_needs_start = true;
        } else {
            let mut alpha = alpha_max;
            let mut first = true;
            while alpha >= config.min_step {
                let zt: Vec<f64> = z.iter().zip(&dz).map(|(z, d)| z + alpha * d).collect();
                let st: Vec<f64> = s.iter().zip(&ds).map(|(s, d)| s + alpha * d).collect();
                let ft = problem.objective(&zt);
                let (ct, gt) = constraints(problem, &zt);
                let (phit, thetat) = merit(ft, &ct, &gt, &st, mu, nu);
                if phit.is_finite() && phit <= phi0 + config.armijo * alpha * slope {
                    accepted = Some((zt, st, alpha));
                    break;
                }
                if first && thetat >= theta0 && phit.is_finite() {
                    // Second-order correction against the Maratos effect.
                    let rg_t: Vec<f64> = gt.iter().zip(&st).map(|(g, s)| g + s).collect();
                    let aux: Vec<f64> = (0..mi).map(|i| sigma[i] * rg_t[i]).collect();
                    let mut soc = vec![0.0; n + me];
                    if mi > 0 {
                        pt.jg.mul_transpose_vec(&aux, &mut jg_aux);
                        for i in 0..n {
                            soc[i] = -jg_aux[i];
                        }
                    }
                    for i in 0..me {
                        soc[n + i] = -ct[i];
                    }
                    fac.solve_in_place(&mut soc);
                    let dzc = &soc[..n];
                    if mi > 0 {
                        pt.jg.mul_vec(dzc, &mut jg_dz);
                    }
                    let dsc: Vec<f64> = (0..mi).map(|i| -rg_t[i] - jg_dz[i]).collect();
                    let zc: Vec<f64> = zt.iter().zip(dzc).map(|(a, b)| a + b).collect();
                    let sc: Vec<f64> = st.iter().zip(&dsc).map(|(a, b)| a + b).collect();
                    if all_finite(&zc) && sc.iter().zip(&s).all(|(sc, s)| *sc >= (1.0 - tau) * s) {
                        let fc = problem.objective(&zc);
                        let (cc, gc) = constraints(problem, &zc);
                        let (phic, _) = merit(fc, &cc, &gc, &sc, mu, nu);
                        if phic.is_finite() && phic <= phi0 + config.armijo * alpha * slope {
                            trace!("iteration {iteration}: second-order correction accepted");
                            accepted = Some((zc, sc, alpha));
                            break;
                        }
                    }
                }
                first = false;
                alpha *= config.backtrack;
            }
        }

        let Some((z_new, s_new, alpha)) = accepted else {
            debug!("line search failed at iteration {iteration}");
            break if infeasibility_stationary(&pt, config) {
                SolveStatus::InfeasibleDetected
            } else {
                SolveStatus::NumericalFailure
            };
        };

        z = z_new;
        s = s_new;
        for i in 0..me {
            y[i] += alpha * dy[i];
        }
        for i in 0..mi {
            let wi = w[i] + alpha_w * dw[i];
            w[i] = wi.clamp(mu / (kappa_sigma * s[i]), kappa_sigma * mu / s[i]);
        }
        pt = evaluate(problem, &z);
        last_alpha = alpha;
        iteration += 1;

        if !trace_needs_start {
            let (phi, _) = merit(pt.f, &pt.c, &pt.g, &s, mu, nu);
            merit_trace.push(MeritRecord { iteration, phase, merit: phi });
        }
    };

    let res = kkt_residuals(problem, &z, &y, &w);
    let status = match status {
        SolveStatus::Converged
            if res.kkt_residual() <= config.kkt_tolerance && res.primal <= config.constraint_tolerance =>
        {
            SolveStatus::Converged
        }
        SolveStatus::Converged => SolveStatus::NumericalFailure,
        other => other,
    };
    debug!(
        "finished after {iteration} iterations: {status:?}, kkt {:.2e}, violation {:.2e}",
        res.kkt_residual(),
        res.primal
    );
    Ok(NlpSolution {
        objective: problem.objective(&z),
        x: z,
        eq_multipliers: y,
        ineq_multipliers: w,
        status,
        kkt_residual: res.kkt_residual(),
        constraint_violation: res.primal,
        complementarity: res.complementarity,
        iterations: iteration,
        inertia_corrections,
        merit_trace,
    })
}

/// True when the current point is (nearly) stationary for the constraint
/// violation `½‖c‖² + ½‖max(g, 0)‖²` while still violating the constraints.
fn infeasibility_stationary(pt: &Point, config: &SolverConfig) -> bool {
    let viol = inf_norm(&pt.c).max(pt.g.iter().fold(0.0_f64, |m, g| m.max(*g)));
    if viol <= config.constraint_tolerance {
        return false;
    }
    let n = pt.grad.len();
    let mut grad = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    pt.jc.mul_transpose_vec(&pt.c, &mut grad);
    let gplus: Vec<f64> = pt.g.iter().map(|g| g.max(0.0)).collect();
    pt.jg.mul_transpose_vec(&gplus, &mut tmp);
    grad.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    inf_norm(&grad) <= 1e-4 * viol.max(1.0)
}
