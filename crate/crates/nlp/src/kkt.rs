use serde::{Deserialize, Serialize};

use crate::problem::NonlinearProgram;

/// Infinity-norm residuals of the first-order conditions
///
/// ```text
/// stationarity     ‖∇f + J_cᵀ y + J_gᵀ w‖∞
/// primal           max(‖c‖∞, ‖max(g, 0)‖∞)
/// dual             ‖max(−w, 0)‖∞
/// complementarity  ‖w ∘ g‖∞
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    /// The optimality part: everything except primal feasibility.
    pub fn kkt_residual(&self) -> f64 {
        self.stationarity.max(self.dual).max(self.complementarity)
    }
}

pub fn kkt_residuals<P: NonlinearProgram + ?Sized>(
    problem: &P,
    z: &[f64],
    eq_multipliers: &[f64],
    ineq_multipliers: &[f64],
) -> KktResiduals {
    assert_eq!(z.len(), problem.num_variables());
    assert_eq!(eq_multipliers.len(), problem.num_equalities());
    assert_eq!(ineq_multipliers.len(), problem.num_inequalities());

    let grad = crate::problem::lagrangian_gradient(problem, z, 1.0, eq_multipliers, ineq_multipliers);
    let mut c = vec![0.0; problem.num_equalities()];
    problem.equalities(z, &mut c);
    let mut g = vec![0.0; problem.num_inequalities()];
    problem.inequalities(z, &mut g);

    let inf = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0_f64, |m, v| m.max(v));
    KktResiduals {
        stationarity: inf(&mut grad.iter().map(|v| v.abs())),
        primal: inf(&mut c.iter().map(|v| v.abs())).max(inf(&mut g.iter().map(|v| v.max(0.0)))),
        dual: inf(&mut ineq_multipliers.iter().map(|w| (-w).max(0.0))),
        complementarity: inf(&mut ineq_multipliers.iter().zip(&g).map(|(w, g)| (w * g).abs())),
    }
}
