//! Robust LQR policy learning for unknown linear systems.
//!
//! Learns static feedback policies that minimize the worst-case quadratic
//! cost over a data-driven uncertainty region, trading exploration against
//! exploitation through a receding-horizon semidefinite program. Ships with
//! exact simulation, least-squares uncertainty quantification, a dense
//! interior-point SDP backend and a seeded Monte Carlo experiment harness.
//!
//! The numerical core is generic over the scalar type ([`Scalar`], i.e. `f32`
//! or `f64`); the concrete aliases below pin the double-precision
//! instantiations the harness works with.

pub mod conic;
pub mod error;
mod gamma;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod simulation;

pub mod estimation;
pub mod synthesis;
pub mod baselines;
pub mod rrl;
pub mod harness;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases for the main entry points.
pub type LinearSystemF64 = simulation::LinearSystem<f64>;
pub type PolicyF64 = simulation::Policy<f64>;
pub type CostSpecF64 = simulation::CostSpec<f64>;
pub type TrajectoryF64 = simulation::Trajectory<f64>;
pub type DatasetF64 = estimation::Dataset<f64>;
pub type UncertainModelF64 = estimation::UncertainModel<f64>;
