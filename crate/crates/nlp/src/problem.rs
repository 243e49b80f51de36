use crate::sparse::Triplets;

/// How a problem supplies its first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeKind {
    Analytic,
    FiniteDifference,
}

/// A smooth nonlinear program
///
/// ```text
/// minimize f(z)  subject to  c(z) = 0,  g(z) <= 0
/// ```
///
/// with multipliers `y` for `c` and `w >= 0` for `g`. The Lagrangian is
/// `f + yᵀc + wᵀg`, so stationarity reads `∇f + J_cᵀ y + J_gᵀ w = 0`.
pub trait NonlinearProgram {
    fn num_variables(&self) -> usize;
    fn num_equalities(&self) -> usize;
    fn num_inequalities(&self) -> usize;

    fn objective(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], grad: &mut [f64]);
    fn equalities(&self, z: &[f64], out: &mut [f64]);
    fn inequalities(&self, z: &[f64], out: &mut [f64]);
    fn equality_jacobian(&self, z: &[f64]) -> Triplets;
    fn inequality_jacobian(&self, z: &[f64]) -> Triplets;

    /// Lower triangle of `obj_factor ∇²f + Σ y_i ∇²c_i + Σ w_j ∇²g_j`.
    ///
    /// Returning `None` makes the solver difference the Lagrangian gradient
    /// column by column, which is fine for small problems.
    fn lagrangian_hessian(
        &self,
        _z: &[f64],
        _obj_factor: f64,
        _eq_multipliers: &[f64],
        _ineq_multipliers: &[f64],
    ) -> Option<Triplets> {
        None
    }

    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::Analytic
    }
}

/// `∇f + J_cᵀ y + J_gᵀ w`, scaled by `obj_factor` on the objective part.
pub(crate) fn lagrangian_gradient<P: NonlinearProgram + ?Sized>(
    problem: &P,
    z: &[f64],
    obj_factor: f64,
    y: &[f64],
    w: &[f64],
) -> Vec<f64> {
    let n = problem.num_variables();
    let mut grad = vec![0.0; n];
    problem.gradient(z, &mut grad);
    grad.iter_mut().for_each(|g| *g *= obj_factor);
    let mut tmp = vec![0.0; n];
    if !y.is_empty() {
        problem.equality_jacobian(z).mul_transpose_vec(y, &mut tmp);
        grad.iter_mut().zip(&tmp).for_each(|(g, t)| *g += t);
    }
    if !w.is_empty() {
        problem.inequality_jacobian(z).mul_transpose_vec(w, &mut tmp);
        grad.iter_mut().zip(&tmp).for_each(|(g, t)| *g += t);
    }
    grad
}

/// Dense central-difference Hessian of the Lagrangian, lower triangle.
pub(crate) fn finite_difference_hessian<P: NonlinearProgram + ?Sized>(
    problem: &P,
    z: &[f64],
    obj_factor: f64,
    y: &[f64],
    w: &[f64],
) -> Triplets {
    let n = problem.num_variables();
    let mut cols = Vec::with_capacity(n);
    let mut zp = z.to_vec();
    for j in 0..n {
        let h = 1e-6 * z[j].abs().max(1.0);
        zp[j] = z[j] + h;
        let gp = lagrangian_gradient(problem, &zp, obj_factor, y, w);
        zp[j] = z[j] - h;
        let gm = lagrangian_gradient(problem, &zp, obj_factor, y, w);
        zp[j] = z[j];
        cols.push(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let mut hess = Triplets::new(n, n);
    for j in 0..n {
        for i in j..n {
            hess.push(i, j, 0.5 * (cols[j][i] + cols[i][j]));
        }
    }
    hess
}
