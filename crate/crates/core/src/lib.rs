//! PANOC⁺ with Gauss-Newton acceleration for single-shooting optimal
//! control problems with box-constrained inputs.
//!
//! The Gauss-Newton step is an equality-constrained LQR problem solved by a
//! Riccati recursion in `O(N)`; between Gauss-Newton iterations the solver can
//! fall back to structured L-BFGS directions. See [`solver::solve`].
//!
//! Everything is generic over the scalar type through [`Real`] (`f32` or
//! `f64`). The `*64` aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lbfgs;
pub mod models;
pub mod problem;
pub mod prox;
pub mod riccati;
pub mod scalar;
pub mod shooting;
pub mod softcon;
pub mod solver;

#[cfg(any(test, feature = "testing"))]
pub mod testing;

pub use error::{Error, Result};
pub use lbfgs::{structured_lbfgs_direction, LbfgsBuffer};
pub use models::{LinearDynamics, QuadraticCost, StateInputOutput};
pub use problem::{validate, Bounds, Dynamics, Ocp, OutputMap, Stage, StageCost};
pub use prox::{IndexSets, ProxState};
pub use riccati::gauss_newton_step;
pub use scalar::Real;
pub use shooting::{cost_and_gradient, forward_simulate, linearize, StageLinearization, Trajectory};
pub use softcon::{ConstraintMap, SoftConstrainedCost};
pub use solver::{
    solve, stopping_residual, Mode, SolveOutput, SolverParams, SolverStats, Status, StepKind, TraceRecord,
};

pub type Ocp64 = Ocp<f64>;
pub type Bounds64 = Bounds<f64>;
pub type SolverParams64 = SolverParams<f64>;
pub type SolveOutput64 = SolveOutput<f64>;
pub type SoftConstrainedCost64 = SoftConstrainedCost<f64>;
pub type Ocp32 = Ocp<f32>;
pub type SolverParams32 = SolverParams<f32>;
