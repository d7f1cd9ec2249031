//! Box projection, forward-backward step, active sets and the
//! forward-backward envelope for `g = δ_U`.
//!
//! All horizon vectors are stage-major: `u⁰` occupies indices `0..n_u`,
//! `u¹` the next `n_u`, and so on.

use nalgebra::DVector;

use crate::problem::Bounds;
use crate::scalar::Real;

/// Componentwise clamp of `v` onto the box.
pub fn project_box<T: Real>(v: &DVector<T>, bounds: &Bounds<T>) -> DVector<T> {
    debug_assert_eq!(v.len(), bounds.len());
    DVector::from_fn(v.len(), |i, _| bounds.clamp(i, v[i]))
}

/// `û = Π_U(u − γ∇ψ(u))` and `p = û − u`.
pub fn forward_backward_step<T: Real>(
    u: &DVector<T>,
    grad_psi: &DVector<T>,
    gamma: T,
    bounds: &Bounds<T>,
) -> (DVector<T>, DVector<T>) {
    let n = u.len();
    let u_hat = DVector::from_fn(n, |i, _| bounds.clamp(i, u[i] - gamma * grad_psi[i]));
    let p = &u_hat - u;
    (u_hat, p)
}

/// Forward-backward envelope `φ_γ(u) = ψ(u) + ⟨∇ψ(u), p⟩ + ‖p‖²/(2γ)`.
///
/// Only valid when `u + p` lies in the box, so that `g(u + p) = 0`.
pub fn fbe<T: Real>(psi_u: T, grad_psi: &DVector<T>, p: &DVector<T>, gamma: T) -> T {
    psi_u + grad_psi.dot(p) + p.norm_squared() / (T::lit(2.0) * gamma)
}

/// Partition of the input indices into active (`K`) and inactive (`J`) sets.
///
/// `i ∈ J` iff `u_i − γ∇_iψ(u)` lies strictly inside `U_i`; points on the
/// boundary count as active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    active_mask: Vec<bool>,
    active: Vec<usize>,
    inactive: Vec<usize>,
}

impl IndexSets {
    pub fn from_mask(active_mask: Vec<bool>) -> Self {
        let (mut active, mut inactive) = (Vec::new(), Vec::new());
        for (i, &a) in active_mask.iter().enumerate() {
            if a {
                active.push(i);
            } else {
                inactive.push(i);
            }
        }
        Self {
            active_mask,
            active,
            inactive,
        }
    }

    pub fn all_inactive(n: usize) -> Self {
        Self::from_mask(vec![false; n])
    }

    pub fn all_active(n: usize) -> Self {
        Self::from_mask(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.active_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active_mask.is_empty()
    }

    /// Sorted global indices of `K`.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Sorted global indices of `J`.
    pub fn inactive(&self) -> &[usize] {
        &self.inactive
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active_mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.active_mask
    }

    /// Stage-local `(K_k, J_k) ⊆ 0..n_u`.
    pub fn stage(&self, k: usize, nu: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut act, mut inact) = (Vec::new(), Vec::new());
        for i in 0..nu {
            if self.active_mask[k * nu + i] {
                act.push(i);
            } else {
                inact.push(i);
            }
        }
        (act, inact)
    }
}

pub fn compute_index_sets<T: Real>(u: &DVector<T>, grad_psi: &DVector<T>, gamma: T, bounds: &Bounds<T>) -> IndexSets {
    let mask = (0..u.len())
        .map(|i| !bounds.in_interior(i, u[i] - gamma * grad_psi[i]))
        .collect();
    IndexSets::from_mask(mask)
}

/// Quantities of one forward-backward evaluation at an iterate `u`.
#[derive(Debug, Clone)]
pub struct ProxState<T: Real> {
    pub u: DVector<T>,
    pub grad_psi: DVector<T>,
    pub u_hat: DVector<T>,
    pub p: DVector<T>,
    pub gamma: T,
    pub psi_u: T,
    pub fbe: T,
}

impl<T: Real> ProxState<T> {
    pub fn new(u: DVector<T>, psi_u: T, grad_psi: DVector<T>, gamma: T, bounds: &Bounds<T>) -> Self {
        let (u_hat, p) = forward_backward_step(&u, &grad_psi, gamma, bounds);
        let fbe = fbe(psi_u, &grad_psi, &p, gamma);
        Self {
            u,
            grad_psi,
            u_hat,
            p,
            gamma,
            psi_u,
            fbe,
        }
    }

    /// Fixed-point residual `r_γ(u) = −p/γ`.
    pub fn residual(&self) -> DVector<T> {
        -&self.p / self.gamma
    }

    pub fn index_sets(&self, bounds: &Bounds<T>) -> IndexSets {
        compute_index_sets(&self.u, &self.grad_psi, self.gamma, bounds)
    }
}
