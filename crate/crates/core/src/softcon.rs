//! Quadratic-penalty soft state constraints.
//!
//! A state constraint `c_k(x^k) ∈ D_k` is relaxed to the penalty
//! `(μ_k/2)·dist²_{D_k}(c_k(x^k))` and folded into the stage cost through the
//! output `h_k(x, u) = (x, u, c_k(x))`:
//!
//! ```text
//! ℓ_k(x, u, z) = ½‖x − x_r‖²_Q + ½‖u − u_r‖²_R + (μ_k/2)·dist²_D(z)
//! ℓ_N(x, z)    = ½‖x − x_r‖²_{Q_N} + (μ_N/2)·dist²_D(z)
//! ```
//!
//! With `R ≻ 0`, `Q, Q_N ⪰ 0` and `μ_k ≥ 0` the Gauss-Newton matrix of the
//! resulting problem is positive definite.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::stacked_curvature;
use crate::problem::{Bounds, Dynamics, Ocp, OutputMap, Stage, StageCost};
use crate::scalar::Real;

/// Smooth constraint function `z = c(x)`.
pub trait ConstraintMap<T: Real>: Send + Sync {
    fn nz(&self) -> usize;
    fn eval(&self, x: &[T]) -> DVector<T>;
    fn jacobian(&self, x: &[T]) -> DMatrix<T>;
}

#[derive(Clone)]
pub struct SoftConstrainedCost<T: Real> {
    q: DMatrix<T>,
    r: DMatrix<T>,
    q_terminal: DMatrix<T>,
    x_ref: DVector<T>,
    u_ref: DVector<T>,
    constraint: Option<(Arc<dyn ConstraintMap<T>>, Bounds<T>)>,
    mu: Vec<T>,
}

fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    m.clone().symmetric_eigenvalues().min()
}

fn check_psd<T: Real>(name: &str, m: &DMatrix<T>, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::InvalidCost(format!("{name} must be {n}x{n}")));
    }
    let scale = T::one() + m.amax();
    if (m - m.transpose()).amax() > T::lit(1e-12) * scale {
        return Err(Error::InvalidCost(format!("{name} is not symmetric")));
    }
    if n > 0 && min_eigenvalue(m) < -T::lit(1e-12) * scale {
        return Err(Error::InvalidCost(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

impl<T: Real> SoftConstrainedCost<T> {
    /// `mu` holds `μ_0 ..= μ_N`, so its length fixes the horizon `N`.
    pub fn new(
        q: DMatrix<T>,
        r: DMatrix<T>,
        q_terminal: DMatrix<T>,
        x_ref: DVector<T>,
        u_ref: DVector<T>,
        constraint: Option<(Arc<dyn ConstraintMap<T>>, Bounds<T>)>,
        mu: Vec<T>,
    ) -> Result<Self> {
        let nx = x_ref.len();
        let nu = u_ref.len();
        check_psd("Q", &q, nx)?;
        check_psd("Q_N", &q_terminal, nx)?;
        if r.shape() != (nu, nu) || r.clone().cholesky().is_none() {
            return Err(Error::InvalidCost("R must be positive definite".into()));
        }
        if mu.is_empty() {
            return Err(Error::InvalidCost("need at least μ_0 and μ_N".into()));
        }
        if mu.iter().any(|m| !(*m >= T::zero())) {
            return Err(Error::InvalidCost("penalty weights must be nonnegative".into()));
        }
        if let Some((c, d)) = &constraint {
            if c.nz() != d.len() {
                return Err(Error::InvalidCost("constraint and target box differ in size".into()));
            }
            if let Some(i) = d.violations().first() {
                return Err(Error::InvalidCost(format!("target box bound {i}: lb > ub")));
            }
        }
        Ok(Self {
            q,
            r,
            q_terminal,
            x_ref,
            u_ref,
            constraint,
            mu,
        })
    }

    /// Pure tracking cost with no state constraint.
    pub fn tracking(
        q: DMatrix<T>,
        r: DMatrix<T>,
        q_terminal: DMatrix<T>,
        x_ref: DVector<T>,
        u_ref: DVector<T>,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(q, r, q_terminal, x_ref, u_ref, None, vec![T::zero(); horizon + 1])
    }

    pub fn horizon(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn nx(&self) -> usize {
        self.x_ref.len()
    }

    pub fn nu(&self) -> usize {
        self.u_ref.len()
    }

    pub fn nz(&self) -> usize {
        self.constraint.as_ref().map_or(0, |(c, _)| c.nz())
    }

    pub fn x_ref(&self) -> &DVector<T> {
        &self.x_ref
    }

    fn is_terminal(&self, k: usize) -> bool {
        k == self.horizon()
    }

    /// Output dimension of stage `k`.
    pub fn ny(&self, k: usize) -> usize {
        let nu = if self.is_terminal(k) { 0 } else { self.nu() };
        self.nx() + nu + self.nz()
    }

    /// `(x − x_r, u − u_r, z)` views of a stage output.
    fn split<'a>(&self, k: usize, y: &'a [T]) -> (DVector<T>, Option<DVector<T>>, &'a [T]) {
        let nx = self.nx();
        let dx = DVector::from_column_slice(&y[..nx]) - &self.x_ref;
        if self.is_terminal(k) {
            (dx, None, &y[nx..])
        } else {
            let nu = self.nu();
            let du = DVector::from_column_slice(&y[nx..nx + nu]) - &self.u_ref;
            (dx, Some(du), &y[nx + nu..])
        }
    }

    /// `z − Π_D(z)`.
    fn penalty_residual(&self, z: &[T]) -> DVector<T> {
        match &self.constraint {
            Some((_, d)) => DVector::from_fn(z.len(), |i, _| z[i] - d.clamp(i, z[i])),
            None => DVector::zeros(0),
        }
    }

    fn state_weight(&self, k: usize) -> &DMatrix<T> {
        if self.is_terminal(k) {
            &self.q_terminal
        } else {
            &self.q
        }
    }

    /// `ℓ_k(y)`.
    pub fn eval(&self, k: usize, y: &[T]) -> T {
        let half = T::lit(0.5);
        let (dx, du, z) = self.split(k, y);
        let mut v = half * dx.dot(&(self.state_weight(k) * &dx));
        if let Some(du) = du {
            v += half * du.dot(&(&self.r * &du));
        }
        v + half * self.mu[k] * self.penalty_residual(z).norm_squared()
    }

    /// `∇ℓ_k(y)`.
    pub fn grad(&self, k: usize, y: &[T]) -> DVector<T> {
        let (dx, du, z) = self.split(k, y);
        let gx = self.state_weight(k) * dx;
        let gu = du.map(|du| &self.r * du);
        let gz = self.penalty_residual(z) * self.mu[k];
        let len = gx.len() + gu.as_ref().map_or(0, |g| g.len()) + gz.len();
        let it = gx.iter().chain(gu.iter().flat_map(|g| g.iter())).chain(gz.iter());
        DVector::from_iterator(len, it.copied())
    }

    /// `Λ = blkdiag(Q, R, M)` with `M_ii = μ_k` unless `z_i` is strictly
    /// inside `D_i`; boundary points take the `μ_k` branch.
    pub fn genhess(&self, k: usize, y: &[T]) -> DMatrix<T> {
        let ny = self.ny(k);
        let nx = self.nx();
        let mut h = DMatrix::zeros(ny, ny);
        h.view_mut((0, 0), (nx, nx)).copy_from(self.state_weight(k));
        let mut off = nx;
        if !self.is_terminal(k) {
            let nu = self.nu();
            h.view_mut((nx, nx), (nu, nu)).copy_from(&self.r);
            off += nu;
        }
        if let Some((_, d)) = &self.constraint {
            for i in 0..d.len() {
                if !d.in_interior(i, y[off + i]) {
                    h[(off + i, off + i)] = self.mu[k];
                }
            }
        }
        h
    }

    /// Builds the single-shooting problem; stages share this cost.
    pub fn into_ocp(
        self,
        horizon: usize,
        x_init: DVector<T>,
        dynamics: Arc<dyn Dynamics<T>>,
        input_bounds: Bounds<T>,
    ) -> Ocp<T> {
        assert_eq!(
            horizon,
            self.horizon(),
            "horizon disagrees with the number of penalty weights"
        );
        let cost = Arc::new(self);
        let stage = |k: usize| {
            let s = Arc::new(SoftStage {
                cost: Arc::clone(&cost),
                k,
            });
            Stage::new(s.clone() as Arc<dyn OutputMap<T>>, s as Arc<dyn StageCost<T>>)
        };
        let terminal = stage(horizon);
        let uniform = cost.mu[..horizon].iter().all(|&m| m == cost.mu[0]);
        if uniform {
            Ocp::uniform(horizon, x_init, dynamics, stage(0), terminal, input_bounds)
        } else {
            let stages = (0..horizon).map(stage).collect();
            Ocp::time_varying(x_init, dynamics, stages, terminal, input_bounds)
        }
    }
}

/// Stage `k` of a [`SoftConstrainedCost`] as output map and cost.
struct SoftStage<T: Real> {
    cost: Arc<SoftConstrainedCost<T>>,
    k: usize,
}

impl<T: Real> OutputMap<T> for SoftStage<T> {
    fn ny(&self) -> usize {
        self.cost.ny(self.k)
    }

    fn eval(&self, x: &[T], u: Option<&[T]>) -> DVector<T> {
        let z = match &self.cost.constraint {
            Some((c, _)) => c.eval(x),
            None => DVector::zeros(0),
        };
        let u = u.unwrap_or(&[]);
        DVector::from_iterator(x.len() + u.len() + z.len(), x.iter().chain(u).chain(z.iter()).copied())
    }

    fn jacobian(&self, x: &[T], u: Option<&[T]>) -> (DMatrix<T>, Option<DMatrix<T>>) {
        let nx = x.len();
        let nu = u.map_or(0, <[T]>::len);
        let ny = nx + nu + self.cost.nz();
        let mut jx = DMatrix::zeros(ny, nx);
        jx.view_mut((0, 0), (nx, nx)).fill_with_identity();
        if let Some((c, _)) = &self.cost.constraint {
            jx.view_mut((nx + nu, 0), (c.nz(), nx)).copy_from(&c.jacobian(x));
        }
        let ju = u.map(|_| {
            let mut ju = DMatrix::zeros(ny, nu);
            ju.view_mut((nx, 0), (nu, nu)).fill_with_identity();
            ju
        });
        (jx, ju)
    }

    fn vjp(&self, x: &[T], u: Option<&[T]>, w: &[T]) -> (DVector<T>, Option<DVector<T>>) {
        let nx = x.len();
        let nu = u.map_or(0, <[T]>::len);
        let mut gx = DVector::from_column_slice(&w[..nx]);
        if let Some((c, _)) = &self.cost.constraint {
            let wz = DVector::from_column_slice(&w[nx + nu..]);
            gx += c.jacobian(x).tr_mul(&wz);
        }
        (gx, u.map(|_| DVector::from_column_slice(&w[nx..nx + nu])))
    }

    fn curvature(&self, x: &[T], u: Option<&[T]>, lam: &DMatrix<T>) -> (DMatrix<T>, Option<(DMatrix<T>, DMatrix<T>)>) {
        let jc = self.cost.constraint.as_ref().map(|(c, _)| c.jacobian(x));
        let nu = u.map_or(0, <[T]>::len);
        stacked_curvature(lam, x.len(), nu, u.is_some(), jc.as_ref())
    }
}

impl<T: Real> StageCost<T> for SoftStage<T> {
    fn ny(&self) -> usize {
        self.cost.ny(self.k)
    }

    fn eval(&self, y: &[T]) -> T {
        self.cost.eval(self.k, y)
    }

    fn grad(&self, y: &[T]) -> DVector<T> {
        self.cost.grad(self.k, y)
    }

    fn hess(&self, y: &[T]) -> DMatrix<T> {
        self.cost.genhess(self.k, y)
    }
}
