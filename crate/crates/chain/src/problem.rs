//! Optimal control problem instances for the chain.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use panoc_gn::{Bounds, Dynamics, Ocp, SoftConstrainedCost};

use crate::equilibrium::equilibrium;
use crate::model::ChainModel;
use crate::params::ChainParams;
use crate::rk4::Rk4;
use crate::ChainError;

/// Equilibrium, discrete dynamics and weights shared by all instances of
/// one parameter set.
#[derive(Debug, Clone)]
pub struct ChainProblem {
    pub params: ChainParams,
    pub dynamics: Arc<Rk4<ChainModel>>,
    pub x_eq: DVector<f64>,
    pub q_terminal: DMatrix<f64>,
}

/// `P ← Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`, `steps` times from `P = Q`.
pub fn terminal_weight(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    steps: usize,
) -> DMatrix<f64> {
    let mut p = q.clone();
    for _ in 0..steps {
        let pa = &p * a;
        let pb = &p * b;
        let s = r + b.tr_mul(&pb);
        let gain = s.cholesky().expect("R + BᵀPB positive definite").solve(&pb.tr_mul(a));
        let next = q + a.tr_mul(&pa) - pb.tr_mul(a).tr_mul(&gain);
        p = (&next + next.transpose()) * 0.5;
    }
    p
}

/// Rolls the discrete dynamics from `x_eq` under `inputs`.
pub fn disturb(dynamics: &Rk4<ChainModel>, x_eq: &DVector<f64>, inputs: &[[f64; 3]]) -> DVector<f64> {
    inputs.iter().fold(x_eq.clone(), |x, u| dynamics.eval(x.as_slice(), u))
}

impl ChainProblem {
    pub fn new(params: ChainParams) -> Result<Self, ChainError> {
        let x_eq = equilibrium(&params)?;
        let dynamics = Arc::new(Rk4::new(ChainModel::new(&params), params.dt));
        let nx = params.nx();
        let q = DMatrix::identity(nx, nx) * params.q_weight;
        let q_terminal = if params.terminal_riccati_steps == 0 {
            q
        } else {
            let (a, b) = dynamics.jacobian(x_eq.as_slice(), &[0.0; 3]);
            let r = DMatrix::identity(3, 3) * params.r_weight;
            terminal_weight(&a, &b, &q, &r, params.terminal_riccati_steps)
        };
        Ok(Self {
            params,
            dynamics,
            x_eq,
            q_terminal,
        })
    }

    pub fn model(&self) -> &ChainModel {
        &self.dynamics.model
    }

    pub fn nx(&self) -> usize {
        self.params.nx()
    }

    pub fn input_bounds(&self) -> Bounds<f64> {
        Bounds::uniform(3, -self.params.v_max, self.params.v_max)
    }

    pub fn disturb(&self, inputs: &[[f64; 3]]) -> DVector<f64> {
        disturb(&self.dynamics, &self.x_eq, inputs)
    }

    /// Tracking of `x_eq` from `x_init` over the configured horizon.
    pub fn ocp(&self, x_init: DVector<f64>) -> Result<Ocp<f64>, ChainError> {
        self.ocp_with_horizon(self.params.horizon, x_init)
    }

    pub fn ocp_with_horizon(&self, horizon: usize, x_init: DVector<f64>) -> Result<Ocp<f64>, ChainError> {
        let nx = self.nx();
        if x_init.len() != nx {
            return Err(panoc_gn::Error::Dimension {
                what: "chain initial state".into(),
                expected: nx,
                found: x_init.len(),
            }
            .into());
        }
        let cost = SoftConstrainedCost::tracking(
            DMatrix::identity(nx, nx) * self.params.q_weight,
            DMatrix::identity(3, 3) * self.params.r_weight,
            self.q_terminal.clone(),
            self.x_eq.clone(),
            DVector::zeros(3),
            horizon,
        )?;
        Ok(cost.into_ocp(horizon, x_init, self.dynamics.clone(), self.input_bounds()))
    }
}
