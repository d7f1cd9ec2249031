//! Single-shooting evaluation of the cost `ψ(u)` and its gradient.
//!
//! [`forward_simulate`] rolls out the dynamics and accumulates the cost.
//! [`backward_gradient`] runs the adjoint sweep and keeps the dynamics
//! Jacobians and cost gradients per stage, which [`assemble_gn_data`] later
//! completes with the Gauss-Newton curvature blocks. [`gradient`] is the
//! Jacobian-free variant of the sweep built on vector-Jacobian products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::Ocp;
use crate::scalar::Real;

/// States, outputs and cost of one rollout.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    /// `x⁰ ..= x^N`.
    pub x: Vec<DVector<T>>,
    /// `h̄⁰ ..= h̄^N`.
    pub h: Vec<DVector<T>>,
    pub psi: T,
}

/// Per-stage data of the linear-quadratic model around a trajectory.
///
/// `a`, `b`, `q`, `r` come out of [`backward_gradient`]; the curvature
/// blocks (`lambda`, `qm`, `s`, `rm`) stay empty until [`assemble_gn_data`].
#[derive(Debug, Clone)]
pub struct StageLinearization<T: Real> {
    /// `A_k = ∂f/∂x`, `k < N`.
    pub a: Vec<DMatrix<T>>,
    /// `B_k = ∂f/∂u`, `k < N`.
    pub b: Vec<DMatrix<T>>,
    /// `q^k = (∂h_k/∂x)ᵀ∇ℓ_k`, `k ≤ N`.
    pub q: Vec<DVector<T>>,
    /// `r^k = (∂h_k/∂u)ᵀ∇ℓ_k`, `k < N`.
    pub r: Vec<DVector<T>>,
    /// `Λ_k ∈ ∂²ℓ_k(h̄^k)`, `k ≤ N`.
    pub lambda: Vec<DMatrix<T>>,
    /// `Q_k`, `k ≤ N`.
    pub qm: Vec<DMatrix<T>>,
    /// `S_k` (`n_u × n_x`), `k < N`.
    pub s: Vec<DMatrix<T>>,
    /// `R_k`, `k < N`.
    pub rm: Vec<DMatrix<T>>,
}

impl<T: Real> Default for StageLinearization<T> {
    fn default() -> Self {
        Self {
            a: Vec::new(),
            b: Vec::new(),
            q: Vec::new(),
            r: Vec::new(),
            lambda: Vec::new(),
            qm: Vec::new(),
            s: Vec::new(),
            rm: Vec::new(),
        }
    }
}

impl<T: Real> StageLinearization<T> {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn nx(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }

    pub fn nu(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    pub fn has_curvature(&self) -> bool {
        !self.qm.is_empty()
    }
}

fn check_len<T: Real>(ocp: &Ocp<T>, u: &DVector<T>) -> Result<()> {
    if u.len() != ocp.n_inputs() {
        return Err(Error::Dimension {
            what: "input sequence".into(),
            expected: ocp.n_inputs(),
            found: u.len(),
        });
    }
    Ok(())
}

/// Rolls out `x^{k+1} = f(x^k, u^k)` from `x_init` and sums the stage costs.
pub fn forward_simulate<T: Real>(ocp: &Ocp<T>, u: &DVector<T>) -> Result<Trajectory<T>> {
    check_len(ocp, u)?;
    let n = ocp.horizon();
    let mut x = Vec::with_capacity(n + 1);
    let mut h = Vec::with_capacity(n + 1);
    x.push(ocp.x_init().clone());
    let mut psi = T::zero();
    for k in 0..n {
        let u_k = ocp.input_slice(u, k);
        let xk = x[k].as_slice();
        let stage = ocp.stage(k);
        let hk = stage.output.eval(xk, Some(u_k));
        let lk = stage.cost.eval(hk.as_slice());
        let xn = ocp.dynamics().eval(xk, u_k);
        if !lk.is_finite() || xn.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCost { stage: k });
        }
        psi += lk;
        h.push(hk);
        x.push(xn);
    }
    let term = ocp.stage(n);
    let hn = term.output.eval(x[n].as_slice(), None);
    let ln = term.cost.eval(hn.as_slice());
    if !ln.is_finite() {
        return Err(Error::NonFiniteCost { stage: n });
    }
    psi += ln;
    h.push(hn);
    Ok(Trajectory { x, h, psi })
}

/// Cost only; same failure semantics as [`forward_simulate`].
pub fn cost<T: Real>(ocp: &Ocp<T>, u: &DVector<T>) -> Result<T> {
    forward_simulate(ocp, u).map(|t| t.psi)
}

/// Adjoint sweep returning `∇ψ(u)` and the cached `A_k, B_k, q^k, r^k`.
pub fn backward_gradient<T: Real>(
    ocp: &Ocp<T>,
    u: &DVector<T>,
    traj: &Trajectory<T>,
) -> Result<(DVector<T>, StageLinearization<T>)> {
    check_len(ocp, u)?;
    let n = ocp.horizon();
    let nu = ocp.nu();
    let mut grad = DVector::zeros(n * nu);
    let mut lin = StageLinearization {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        q: Vec::with_capacity(n + 1),
        r: Vec::with_capacity(n),
        ..Default::default()
    };

    let term = ocp.stage(n);
    let g_n = term.cost.grad(traj.h[n].as_slice());
    let (q_n, _) = term.output.vjp(traj.x[n].as_slice(), None, g_n.as_slice());
    let mut lambda = q_n.clone();

    // filled back to front, reversed at the end
    let mut q_rev = vec![q_n];
    for k in (0..n).rev() {
        let u_k = ocp.input_slice(u, k);
        let xk = traj.x[k].as_slice();
        let stage = ocp.stage(k);
        let (a, b) = ocp.dynamics().jacobian(xk, u_k);
        let g = stage.cost.grad(traj.h[k].as_slice());
        let (q, r) = stage.output.vjp(xk, Some(u_k), g.as_slice());
        let r = r.expect("stage output VJP w.r.t. u");
        grad.rows_mut(k * nu, nu).copy_from(&(&r + b.tr_mul(&lambda)));
        lambda = &q + a.tr_mul(&lambda);
        lin.a.push(a);
        lin.b.push(b);
        q_rev.push(q);
        lin.r.push(r);
    }
    lin.a.reverse();
    lin.b.reverse();
    lin.r.reverse();
    q_rev.reverse();
    lin.q = q_rev;
    Ok((grad, lin))
}

/// `∇ψ(u)` using vector-Jacobian products only.
pub fn gradient<T: Real>(ocp: &Ocp<T>, u: &DVector<T>, traj: &Trajectory<T>) -> Result<DVector<T>> {
    gradient_with_noise(ocp, u, traj).map(|(g, _)| g)
}

/// `∇ψ(u)` and the rounding scale
///
/// ```text
/// ν = Σ_k |∇ℓ_k|ᵀ|h_k| + |λ_k|ᵀ|x^k|,     λ_k = ∂ψ/∂x^k
/// ```
///
/// Relative errors of order `ε` in the states and outputs move the computed
/// `ψ` by about `ε·ν`, which can exceed `ε·|ψ|` by orders of magnitude when
/// `x^k` tracks a reference far from the origin.
pub fn gradient_with_noise<T: Real>(ocp: &Ocp<T>, u: &DVector<T>, traj: &Trajectory<T>) -> Result<(DVector<T>, T)> {
    check_len(ocp, u)?;
    let n = ocp.horizon();
    let nu = ocp.nu();
    let mut grad = DVector::zeros(n * nu);
    let absdot = |a: &DVector<T>, b: &DVector<T>| {
        a.iter()
            .zip(b.iter())
            .fold(T::zero(), |s, (x, y)| s + x.abs() * y.abs())
    };
    let term = ocp.stage(n);
    let g_n = term.cost.grad(traj.h[n].as_slice());
    let (mut lambda, _) = term.output.vjp(traj.x[n].as_slice(), None, g_n.as_slice());
    let mut noise = absdot(&g_n, &traj.h[n]) + absdot(&lambda, &traj.x[n]);
    for k in (0..n).rev() {
        let u_k = ocp.input_slice(u, k);
        let xk = traj.x[k].as_slice();
        let stage = ocp.stage(k);
        let g = stage.cost.grad(traj.h[k].as_slice());
        let (q, r) = stage.output.vjp(xk, Some(u_k), g.as_slice());
        let r = r.expect("stage output adjoint w.r.t. u");
        let (lx, lu) = ocp.dynamics().vjp(xk, u_k, lambda.as_slice());
        grad.rows_mut(k * nu, nu).copy_from(&(r + lu));
        lambda = q + lx;
        noise += absdot(&g, &traj.h[k]);
        if k > 0 {
            noise += absdot(&lambda, &traj.x[k]);
        }
    }
    Ok((grad, noise))
}

/// `(ψ(u), ∇ψ(u))` via [`forward_simulate`] and [`gradient`].
pub fn cost_and_gradient<T: Real>(ocp: &Ocp<T>, u: &DVector<T>) -> Result<(T, DVector<T>)> {
    let traj = forward_simulate(ocp, u)?;
    let g = gradient(ocp, u, &traj)?;
    Ok((traj.psi, g))
}

/// Fills `Λ_k`, `Q_k = JxᵀΛJx`, `S_k = JuᵀΛJx`, `R_k = JuᵀΛJu` for every stage.
pub fn assemble_gn_data<T: Real>(
    ocp: &Ocp<T>,
    u: &DVector<T>,
    traj: &Trajectory<T>,
    lin: &mut StageLinearization<T>,
) -> Result<()> {
    check_len(ocp, u)?;
    let n = ocp.horizon();
    lin.lambda.clear();
    lin.qm.clear();
    lin.s.clear();
    lin.rm.clear();
    for k in 0..n {
        let u_k = ocp.input_slice(u, k);
        let stage = ocp.stage(k);
        let lam = stage.cost.hess(traj.h[k].as_slice());
        let (q, sr) = stage.output.curvature(traj.x[k].as_slice(), Some(u_k), &lam);
        let (s, r) = sr.expect("stage output Jacobian w.r.t. u");
        lin.qm.push(q);
        lin.s.push(s);
        lin.rm.push(r);
        lin.lambda.push(lam);
    }
    let term = ocp.stage(n);
    let lam = term.cost.hess(traj.h[n].as_slice());
    let (q, _) = term.output.curvature(traj.x[n].as_slice(), None, &lam);
    lin.qm.push(q);
    lin.lambda.push(lam);
    Ok(())
}

/// Forward simulation, adjoint sweep with Jacobian cache and curvature
/// blocks in one call.
pub fn linearize<T: Real>(ocp: &Ocp<T>, u: &DVector<T>) -> Result<(Trajectory<T>, DVector<T>, StageLinearization<T>)> {
    let traj = forward_simulate(ocp, u)?;
    let (g, mut lin) = backward_gradient(ocp, u, &traj)?;
    assemble_gn_data(ocp, u, &traj, &mut lin)?;
    Ok((traj, g, lin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearDynamics, QuadraticCost, StateInputOutput};
    use crate::problem::{Bounds, Stage};
    use crate::testing::{dense_gn_hessian, finite_difference_gradient, random_problem, sensitivities};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn scalar_lq(a: f64, b: f64, n: usize, x0: f64) -> Ocp<f64> {
        // ℓ = ½x², h = x (input weight zero)
        let out = Arc::new(StateInputOutput { nx: 1, nu: 1 });
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        Ocp::uniform(
            n,
            DVector::from_element(1, x0),
            Arc::new(LinearDynamics::scalar(a, b)),
            Stage::new(out, Arc::new(QuadraticCost::new(w, DVector::zeros(2)))),
            Stage::new(
                Arc::new(StateInputOutput { nx: 1, nu: 0 }),
                Arc::new(QuadraticCost::identity(1)),
            ),
            Bounds::unbounded(1),
        )
    }

    #[test]
    fn identity_dynamics_keep_initial_state() {
        let ocp = scalar_lq(1.0, 0.0, 4, 0.7);
        let u = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let t = forward_simulate(&ocp, &u).unwrap();
        assert!(t.x.iter().all(|x| x[0] == 0.7));
    }

    #[test]
    fn scalar_rollout_matches_closed_form() {
        // x_k = a^k x0 + Σ_{j<k} a^{k-1-j} b u_j
        let (a, b, x0) = (0.9, 0.5, 1.3);
        let u = DVector::from_vec(vec![0.2, -0.4, 1.0, 0.1, -0.3]);
        let ocp = scalar_lq(a, b, 5, x0);
        let t = forward_simulate(&ocp, &u).unwrap();
        let mut expected = 0.0;
        for k in 0..=5 {
            let xk: f64 = a.powi(k as i32) * x0 + (0..k).map(|j| a.powi((k - 1 - j) as i32) * b * u[j]).sum::<f64>();
            assert!((t.x[k][0] - xk).abs() < 1e-14);
            expected += 0.5 * xk * xk;
        }
        assert!((t.psi - expected).abs() < 1e-13);
    }

    #[test]
    fn constant_cost_gives_zero_gradient() {
        let ocp = scalar_lq(1.1, 1.0, 3, 0.0);
        let u = DVector::zeros(3);
        let t = forward_simulate(&ocp, &u).unwrap();
        let (g, _) = backward_gradient(&ocp, &u, &t).unwrap();
        assert_eq!(g, DVector::zeros(3));
    }

    #[test]
    fn nan_rollout_is_an_error() {
        let ocp = scalar_lq(1.0, 1.0, 2, 0.0);
        let u = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert_eq!(
            forward_simulate(&ocp, &u).unwrap_err(),
            Error::NonFiniteCost { stage: 0 }
        );
        let short = DVector::zeros(1);
        assert!(matches!(forward_simulate(&ocp, &short), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let ocp = random_problem(&mut rng, 5, 3, 2, false);
            let u = DVector::from_fn(ocp.n_inputs(), |_, _| rng.random_range(-1.0..1.0));
            let t = forward_simulate(&ocp, &u).unwrap();
            let (g, lin) = backward_gradient(&ocp, &u, &t).unwrap();
            let g2 = gradient(&ocp, &u, &t).unwrap();
            let fd = finite_difference_gradient(&ocp, &u);
            let err = (&g - &fd).norm() / (1.0 + fd.norm());
            assert!(err <= 1e-6, "rel err {err}");
            assert!((&g - &g2).amax() <= 1e-12 * (1.0 + g.amax()));
            // cached Jacobians equal fresh evaluations
            for k in 0..5 {
                let (a, b) = ocp.dynamics().jacobian(t.x[k].as_slice(), ocp.input_slice(&u, k));
                assert_eq!(a, lin.a[k]);
                assert_eq!(b, lin.b[k]);
            }
            // cost consistency
            let resum: f64 = (0..=5).map(|k| ocp.stage(k).cost.eval(t.h[k].as_slice())).sum();
            assert!((resum - t.psi).abs() <= 1e-12 * (1.0 + t.psi.abs()));
        }
    }

    /// Linear-quadratic problem: `ψ(u) = ½uᵀHu + gᵀu + c` with `H`, `g` condensed densely.
    #[test]
    fn lq_gradient_matches_condensed_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ocp = random_problem(&mut rng, 4, 3, 2, true);
        let u0 = DVector::zeros(ocp.n_inputs());
        let (t0, g0, lin0) = linearize(&ocp, &u0).unwrap();
        let h = dense_gn_hessian(&ocp, &t0, &lin0, &u0);
        let u = DVector::from_fn(ocp.n_inputs(), |_, _| rng.random_range(-1.0..1.0));
        let t = forward_simulate(&ocp, &u).unwrap();
        let (g, _) = backward_gradient(&ocp, &u, &t).unwrap();
        let expected = &h * &u + &g0;
        assert!((&g - &expected).amax() < 1e-10, "{}", (&g - &expected).amax());
        let sens = sensitivities(&lin0);
        assert_eq!(sens.len(), 5);
    }

    #[test]
    fn identity_output_gives_cost_blocks() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = DMatrix::from_element(1, 1, 0.3);
        let mut w = DMatrix::zeros(3, 3);
        w.view_mut((0, 0), (2, 2)).copy_from(&q);
        w.view_mut((2, 2), (1, 1)).copy_from(&r);
        let dynamics = LinearDynamics::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
        );
        let ocp = Ocp::uniform(
            3,
            DVector::from_vec(vec![1.0, 0.0]),
            Arc::new(dynamics),
            Stage::new(
                Arc::new(StateInputOutput { nx: 2, nu: 1 }),
                Arc::new(QuadraticCost::new(w, DVector::zeros(3))),
            ),
            Stage::new(
                Arc::new(StateInputOutput { nx: 2, nu: 0 }),
                Arc::new(QuadraticCost::new(q.clone(), DVector::zeros(2))),
            ),
            Bounds::unbounded(1),
        );
        let (_, _, lin) = linearize(&ocp, &DVector::zeros(3)).unwrap();
        for k in 0..3 {
            assert_eq!(lin.qm[k], q);
            assert_eq!(lin.rm[k], r);
            assert_eq!(lin.s[k], DMatrix::zeros(1, 2));
        }
        assert_eq!(lin.qm[3], q);
    }

    #[test]
    fn gn_blocks_match_dense_sensitivity_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let ocp = random_problem(&mut rng, 5, 3, 2, false);
            let u = DVector::from_fn(ocp.n_inputs(), |_, _| rng.random_range(-1.0..1.0));
            let (t, _, lin) = linearize(&ocp, &u).unwrap();
            let dense = dense_gn_hessian(&ocp, &t, &lin, &u);
            let condensed = crate::testing::condense_blocks(&lin);
            assert!((&dense - &condensed).amax() < 1e-10 * (1.0 + dense.amax()));
            for k in 0..5 {
                assert!(lin.qm[k].symmetric_eigenvalues().min() > -1e-10);
                assert!(lin.rm[k].symmetric_eigenvalues().min() > -1e-10);
            }
        }
    }
}
