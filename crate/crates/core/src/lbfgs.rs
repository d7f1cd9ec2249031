//! Structured L-BFGS directions for the inactive inputs.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::prox::{IndexSets, ProxState};
use crate::scalar::Real;

/// Ring buffer of curvature pairs `(s, y)` over the full input space.
#[derive(Debug, Clone)]
pub struct LbfgsBuffer<T: Real> {
    memory: usize,
    eps_curv: T,
    s: VecDeque<DVector<T>>,
    y: VecDeque<DVector<T>>,
}

impl<T: Real> LbfgsBuffer<T> {
    pub const DEFAULT_EPS_CURV: f64 = 1e-12;

    pub fn new(memory: usize) -> Self {
        Self::with_curvature_threshold(memory, T::lit(Self::DEFAULT_EPS_CURV))
    }

    pub fn with_curvature_threshold(memory: usize, eps_curv: T) -> Self {
        assert!(memory > 0, "L-BFGS memory must be positive");
        Self {
            memory,
            eps_curv,
            s: VecDeque::with_capacity(memory),
            y: VecDeque::with_capacity(memory),
        }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    /// Pairs from oldest to newest.
    pub fn pairs(&self) -> impl Iterator<Item = (&DVector<T>, &DVector<T>)> {
        self.s.iter().zip(self.y.iter())
    }

    fn curvature_ok(&self, sy: T, ns: T, ny: T) -> bool {
        sy.is_finite() && sy > self.eps_curv * ns * ny
    }

    /// Stores `(s, y)` if `⟨s, y⟩ > ε‖s‖‖y‖`, evicting the oldest pair when full.
    pub fn update(&mut self, s: DVector<T>, y: DVector<T>) -> bool {
        assert_eq!(s.len(), y.len(), "pair length mismatch");
        if let Some(prev) = self.s.front() {
            assert_eq!(prev.len(), s.len(), "pair length changed");
        }
        if !self.curvature_ok(s.dot(&y), s.norm(), y.norm()) {
            return false;
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        true
    }

    /// Two-loop recursion `H·g` on the coordinates `idx` (all of them when `None`).
    ///
    /// Restricted pairs that fail the curvature test are skipped. Without a
    /// usable pair the result is `fallback·g`.
    pub fn apply(&self, g: &DVector<T>, idx: Option<&[usize]>, fallback: T) -> DVector<T> {
        let restrict = |v: &DVector<T>| match idx {
            Some(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i])),
            None => v.clone(),
        };
        let mut pairs = Vec::with_capacity(self.len());
        for (s, y) in self.pairs() {
            let (s, y) = (restrict(s), restrict(y));
            let sy = s.dot(&y);
            if self.curvature_ok(sy, s.norm(), y.norm()) {
                pairs.push((s, y, T::one() / sy));
            }
        }
        let Some((s_last, y_last, _)) = pairs.last() else {
            return g * fallback;
        };
        let gamma_h = s_last.dot(y_last) / y_last.norm_squared();

        let mut q = g.clone();
        let mut alpha = vec![T::zero(); pairs.len()];
        for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
            alpha[i] = *rho * s.dot(&q);
            q.axpy(-alpha[i], y, T::one());
        }
        q *= gamma_h;
        for (i, (s, y, rho)) in pairs.iter().enumerate() {
            let beta = *rho * y.dot(&q);
            q.axpy(alpha[i] - beta, s, T::one());
        }
        q
    }
}

/// `Δu_K = p_K`, `Δu_J = −H_J ∇_Jψ` with the cross term omitted.
///
/// An empty buffer gives `Δu_J = −γ∇_Jψ`.
pub fn structured_lbfgs_direction<T: Real>(
    buffer: &LbfgsBuffer<T>,
    state: &ProxState<T>,
    sets: &IndexSets,
) -> DVector<T> {
    let mut du = DVector::zeros(state.u.len());
    for &i in sets.active() {
        du[i] = state.p[i];
    }
    let inact = sets.inactive();
    if inact.is_empty() {
        return du;
    }
    let all = inact.len() == du.len();
    let g = if all {
        state.grad_psi.clone()
    } else {
        DVector::from_iterator(inact.len(), inact.iter().map(|&i| state.grad_psi[i]))
    };
    let hg = buffer.apply(&g, (!all).then_some(inact), state.gamma);
    for (j, &i) in inact.iter().enumerate() {
        du[i] = -hg[j];
    }
    du
}
