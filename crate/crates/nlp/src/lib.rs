//! Interior-point solver for smooth nonlinear programs of the form
//!
//! ```text
//! minimize f(z)  subject to  c(z) = 0,  g(z) <= 0
//! ```
//!
//! Problems implement [`NonlinearProgram`]; [`solve`] returns an
//! [`NlpSolution`] with primal-dual iterate, status and residuals. The linear
//! algebra is dense, which keeps the solver simple and deterministic and is
//! fast enough for problems with a few hundred variables.
//!
//! ```
//! use ferry_nlp::{solve, NonlinearProgram, SolveStatus, SolverConfig, Triplets};
//!
//! /// minimize (z - 2)² subject to z <= 1
//! struct Clamp;
//!
//! impl NonlinearProgram for Clamp {
//!     fn num_variables(&self) -> usize { 1 }
//!     fn num_equalities(&self) -> usize { 0 }
//!     fn num_inequalities(&self) -> usize { 1 }
//!     fn objective(&self, z: &[f64]) -> f64 { (z[0] - 2.0).powi(2) }
//!     fn gradient(&self, z: &[f64], g: &mut [f64]) { g[0] = 2.0 * (z[0] - 2.0) }
//!     fn equalities(&self, _: &[f64], _: &mut [f64]) {}
//!     fn inequalities(&self, z: &[f64], out: &mut [f64]) { out[0] = z[0] - 1.0 }
//!     fn equality_jacobian(&self, _: &[f64]) -> Triplets { Triplets::new(0, 1) }
//!     fn inequality_jacobian(&self, _: &[f64]) -> Triplets {
//!         let mut j = Triplets::new(1, 1);
//!         j.push(0, 0, 1.0);
//!         j
//!     }
//! }
//!
//! let sol = solve(&Clamp, &[0.0], &SolverConfig::default()).unwrap();
//! assert_eq!(sol.status, SolveStatus::Converged);
//! assert!((sol.x[0] - 1.0).abs() < 1e-6);
//! assert!((sol.ineq_multipliers[0] - 2.0).abs() < 1e-5);
//! ```

mod derivcheck;
mod kkt;
mod ldl;
mod problem;
mod solver;
mod sparse;

pub use derivcheck::{check_derivatives, relative_error, DerivativeCheck};
pub use kkt::{kkt_residuals, KktResiduals};
pub use ldl::{Inertia, LdlFactor, SymMatrix};
pub use problem::{DerivativeKind, NonlinearProgram};
pub use solver::{
    solve, solve_with_observer, IterationRecord, MeritRecord, NlpSolution, SolveStatus, SolverConfig,
};
pub use sparse::Triplets;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SolverError {
    #[error("initial point has dimension {got}, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective or constraints are not finite at the initial point")]
    NonFiniteStart,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}
