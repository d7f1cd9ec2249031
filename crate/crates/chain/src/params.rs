use serde::{Deserialize, Serialize};

use crate::ChainError;

/// Physical and problem parameters of the chain benchmark.
///
/// The defaults are desk-scale choices, not values from any published
/// parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// Number of free masses.
    pub n_balls: usize,
    /// Mass per ball in kg.
    pub mass: f64,
    /// Spring constant in N/m.
    pub spring_constant: f64,
    /// Spring rest length in m.
    pub rest_length: f64,
    /// Gravitational acceleration in m/s², acting along −z.
    pub gravity: f64,
    /// Sampling period in s.
    pub dt: f64,
    pub horizon: usize,
    pub anchor: [f64; 3],
    /// Target position of the free end.
    pub target: [f64; 3],
    /// Per-axis bound on the free-end velocity in m/s.
    pub v_max: f64,
    /// `Q = q_weight·I`.
    pub q_weight: f64,
    /// `R = r_weight·I`.
    pub r_weight: f64,
    /// Riccati iterations for the terminal weight at the equilibrium
    /// linearization; 0 gives `Q_N = Q`. The chain is lightly damped, so the
    /// iteration needs on the order of a thousand steps to settle.
    pub terminal_riccati_steps: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            n_balls: 6,
            mass: 0.03,
            spring_constant: 0.1,
            rest_length: 0.033,
            gravity: 9.81,
            dt: 0.1,
            horizon: 40,
            anchor: [0.0; 3],
            target: [1.0, 0.0, 0.0],
            v_max: 1.0,
            q_weight: 1.0,
            r_weight: 0.01,
            terminal_riccati_steps: 1000,
        }
    }
}

impl ChainParams {
    /// `6n + 3`: positions of the masses, the free end, velocities of the masses.
    pub fn nx(&self) -> usize {
        6 * self.n_balls + 3
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let positive = [
            ("mass", self.mass),
            ("spring_constant", self.spring_constant),
            ("rest_length", self.rest_length),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("r_weight", self.r_weight),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChainError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gravity >= 0.0 && self.q_weight >= 0.0) {
            return Err(ChainError::InvalidParams(
                "gravity and q_weight must be nonnegative".into(),
            ));
        }
        if self.n_balls == 0 {
            return Err(ChainError::InvalidParams("n_balls must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(ChainError::InvalidParams("horizon must be at least 1".into()));
        }
        if self.anchor.iter().chain(&self.target).any(|v| !v.is_finite()) {
            return Err(ChainError::InvalidParams("anchor and target must be finite".into()));
        }
        Ok(())
    }
}
