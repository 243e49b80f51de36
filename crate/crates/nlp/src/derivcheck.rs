//! Central-difference validation of the derivatives a problem reports.

use serde::Serialize;

use crate::problem::NonlinearProgram;

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    /// Relative error of the objective gradient.
    pub gradient: f64,
    /// Worst per-row relative error over the equality Jacobian.
    pub equality_jacobian: f64,
    /// Worst per-row relative error over the inequality Jacobian.
    pub inequality_jacobian: f64,
}

impl DerivativeCheck {
    pub fn worst(&self) -> f64 {
        self.gradient.max(self.equality_jacobian).max(self.inequality_jacobian)
    }
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`
pub fn relative_error(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    let diff = analytic
        .iter()
        .zip(reference)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = reference.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    diff / scale.max(floor)
}

/// Compares analytic derivatives with central differences of step
/// `step · max(1, |z_j|)`. Errors are relative per output row with an
/// absolute floor of `floor`, so rows that are identically zero compare
/// absolutely.
pub fn check_derivatives<P: NonlinearProgram + ?Sized>(problem: &P, z: &[f64], step: f64, floor: f64) -> DerivativeCheck {
    let n = problem.num_variables();
    let me = problem.num_equalities();
    let mi = problem.num_inequalities();

    let mut grad = vec![0.0; n];
    problem.gradient(z, &mut grad);
    let jc = problem.equality_jacobian(z).to_dense();
    let jg = problem.inequality_jacobian(z).to_dense();

    let mut fd_grad = vec![0.0; n];
    let mut fd_jc = vec![vec![0.0; n]; me];
    let mut fd_jg = vec![vec![0.0; n]; mi];
    let mut zp = z.to_vec();
    let (mut cp, mut cm) = (vec![0.0; me], vec![0.0; me]);
    let (mut gp, mut gm) = (vec![0.0; mi], vec![0.0; mi]);
    for j in 0..n {
        let h = step * z[j].abs().max(1.0);
        zp[j] = z[j] + h;
        let fp = problem.objective(&zp);
        problem.equalities(&zp, &mut cp);
        problem.inequalities(&zp, &mut gp);
        zp[j] = z[j] - h;
        let fm = problem.objective(&zp);
        problem.equalities(&zp, &mut cm);
        problem.inequalities(&zp, &mut gm);
        zp[j] = z[j];
        fd_grad[j] = (fp - fm) / (2.0 * h);
        for i in 0..me {
            fd_jc[i][j] = (cp[i] - cm[i]) / (2.0 * h);
        }
        for i in 0..mi {
            fd_jg[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }

    let rows = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .zip(b)
            .map(|(ra, rb)| relative_error(ra, rb, floor))
            .fold(0.0_f64, f64::max)
    };
    DerivativeCheck {
        gradient: relative_error(&grad, &fd_grad, floor),
        equality_jacobian: rows(&jc, &fd_jc),
        inequality_jacobian: rows(&jg, &fd_jg),
    }
}
