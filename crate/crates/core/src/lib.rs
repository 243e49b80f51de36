//! Planning core for an electric ferry.
//!
//! * [`field`] fits quadratic wind and current models to gridded samples.
//! * [`model`] holds the three-degree-of-freedom dynamics and the power model.
//! * [`identify`] recovers damping and power coefficients from telemetry.
//! * [`corridor`] describes the convex operating area and the thrust bound.
//! * [`ocp`] transcribes the fixed-arrival optimal control problem.
//! * [`scenario`] reads scenario files and provides synthetic presets.
//! * [`planner`] runs live sessions, nudges and Pareto sweeps.

pub mod corridor;
pub mod field;
pub mod identify;
pub mod model;
pub mod ocp;
pub mod planner;
pub mod scenario;
