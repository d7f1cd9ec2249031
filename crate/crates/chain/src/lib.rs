//! Chain of masses connected by springs.
//!
//! `n` point masses hang between a fixed anchor and a velocity-controlled
//! free end. The task is to bring the chain back to rest with the free end at
//! a target position after a disturbance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod model;
pub mod params;
pub mod problem;
pub mod rk4;

pub use equilibrium::equilibrium;
pub use model::ChainModel;
pub use params::ChainParams;
pub use problem::{disturb, ChainProblem};
pub use rk4::{rk4_step, ContinuousModel, Rk4};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("invalid chain parameter: {0}")]
    InvalidParams(String),
    /// Two neighboring masses coincide, so the spring direction is undefined.
    #[error("spring {spring} has zero length")]
    SingularSpring { spring: usize },
    #[error("equilibrium solve did not converge (residual {residual:e})")]
    Equilibrium { residual: f64 },
    #[error(transparent)]
    Solver(#[from] panoc_gn::Error),
}
