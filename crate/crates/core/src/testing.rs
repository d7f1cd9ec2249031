//! Random problem instances and dense reference solvers.
//!
//! Everything here is deliberately naive: dense matrices over the whole
//! horizon, generic LU factorizations and finite differences. These are the
//! oracles the structured routines are checked against.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::models::QuadraticCost;
use crate::problem::{Bounds, Dynamics, Ocp, OutputMap, Stage, StageCost};
use crate::prox::{IndexSets, ProxState};
use crate::shooting::{cost, StageLinearization, Trajectory};
use crate::softcon::{ConstraintMap, SoftConstrainedCost};

fn randn<R: Rng>(rng: &mut R) -> f64 {
    // sum of uniforms is close enough to normal for instance generation
    (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 0.866
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * randn(rng))
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * randn(rng))
}

/// `MᵀM + shift·I`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
    m.tr_mul(&m) + DMatrix::identity(n, n) * shift
}

/// `x⁺ = A x + B u + ε tanh(C x + D u)`.
#[derive(Debug, Clone)]
pub struct TanhDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub eps: f64,
}

impl TanhDynamics {
    pub fn random<R: Rng>(rng: &mut R, nx: usize, nu: usize, eps: f64) -> Self {
        let a = DMatrix::identity(nx, nx) * 0.9 + random_matrix(rng, nx, nx, 0.15);
        Self {
            a,
            b: random_matrix(rng, nx, nu, 0.5),
            c: random_matrix(rng, nx, nx, 1.0),
            d: random_matrix(rng, nx, nu, 1.0),
            eps,
        }
    }

    fn z(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        &self.c * DVector::from_column_slice(x) + &self.d * DVector::from_column_slice(u)
    }
}

impl Dynamics<f64> for TanhDynamics {
    fn nx(&self) -> usize {
        self.a.nrows()
    }

    fn nu(&self) -> usize {
        self.b.ncols()
    }

    fn eval(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        let z = self.z(x, u).map(f64::tanh);
        &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u) + z * self.eps
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = self.z(x, u).map(|z| self.eps * (1.0 - z.tanh().powi(2)));
        let mut jx = self.c.clone();
        let mut ju = self.d.clone();
        for i in 0..s.len() {
            jx.row_mut(i).scale_mut(s[i]);
            ju.row_mut(i).scale_mut(s[i]);
        }
        (&self.a + jx, &self.b + ju)
    }
}

/// `c(x) = sin(E x)`, or `E x` when `linear`.
#[derive(Debug, Clone)]
pub struct SineConstraint {
    pub e: DMatrix<f64>,
    pub linear: bool,
}

impl ConstraintMap<f64> for SineConstraint {
    fn nz(&self) -> usize {
        self.e.nrows()
    }

    fn eval(&self, x: &[f64]) -> DVector<f64> {
        let z = &self.e * DVector::from_column_slice(x);
        if self.linear {
            z
        } else {
            z.map(f64::sin)
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        if self.linear {
            return self.e.clone();
        }
        let z = &self.e * DVector::from_column_slice(x);
        let mut j = self.e.clone();
        for i in 0..z.len() {
            j.row_mut(i).scale_mut(z[i].cos());
        }
        j
    }
}

/// `h(x, u) = (x, u, c(x))`.
#[derive(Debug, Clone)]
pub struct AugmentedOutput {
    pub nx: usize,
    pub nu: usize,
    pub c: SineConstraint,
}

impl OutputMap<f64> for AugmentedOutput {
    fn ny(&self) -> usize {
        self.nx + self.nu + self.c.nz()
    }

    fn eval(&self, x: &[f64], u: Option<&[f64]>) -> DVector<f64> {
        let cx = self.c.eval(x);
        let u = u.unwrap_or(&[]);
        DVector::from_iterator(
            x.len() + u.len() + cx.len(),
            x.iter().chain(u).chain(cx.iter()).copied(),
        )
    }

    fn jacobian(&self, x: &[f64], u: Option<&[f64]>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let nu = u.map_or(0, <[f64]>::len);
        let nc = self.c.nz();
        let ny = self.nx + nu + nc;
        let mut jx = DMatrix::zeros(ny, self.nx);
        jx.view_mut((0, 0), (self.nx, self.nx)).fill_with_identity();
        jx.view_mut((self.nx + nu, 0), (nc, self.nx))
            .copy_from(&self.c.jacobian(x));
        let ju = u.map(|_| {
            let mut ju = DMatrix::zeros(ny, nu);
            ju.view_mut((self.nx, 0), (nu, nu)).fill_with_identity();
            ju
        });
        (jx, ju)
    }
}

/// Random single-shooting problem with `tanh` dynamics, `(x, u, sin(Ex))`
/// outputs and a positive definite quadratic cost. `linear` drops every
/// nonlinearity, which makes `ψ` an exact quadratic.
pub fn random_problem<R: Rng>(rng: &mut R, horizon: usize, nx: usize, nu: usize, linear: bool) -> Ocp<f64> {
    let dynamics = TanhDynamics::random(rng, nx, nu, if linear { 0.0 } else { 0.3 });
    let c = SineConstraint {
        e: random_matrix(rng, 2, nx, 1.0),
        linear,
    };
    let out = AugmentedOutput { nx, nu, c: c.clone() };
    let term = AugmentedOutput { nx, nu: 0, c };
    let ny = nx + nu + 2;
    let w = random_psd(rng, ny, 0.1);
    let wn = random_psd(rng, nx + 2, 0.1);
    let cost = QuadraticCost::new(w, random_vector(rng, ny, 0.5));
    let tcost = QuadraticCost::new(wn, random_vector(rng, nx + 2, 0.5));
    let x0 = random_vector(rng, nx, 1.0);
    Ocp::uniform(
        horizon,
        x0,
        Arc::new(dynamics),
        Stage::new(Arc::new(out), Arc::new(cost)),
        Stage::new(Arc::new(term), Arc::new(tcost)),
        Bounds::uniform(nu, -1.0, 1.0),
    )
}

/// Random soft-constrained problem satisfying `R ≻ 0`, `Q ⪰ 0`, `μ_k ≥ 0`.
pub fn random_softcon_problem<R: Rng>(rng: &mut R, horizon: usize, nx: usize, nu: usize) -> Ocp<f64> {
    let dynamics = TanhDynamics::random(rng, nx, nu, 0.3);
    // rank-deficient Q exercises the semidefinite case
    let m = random_matrix(rng, nx.saturating_sub(1).max(1), nx, 1.0);
    let q = m.tr_mul(&m);
    let r = random_psd(rng, nu, 0.05);
    let qn = random_psd(rng, nx, 0.0);
    let nc = 2;
    let lo = random_vector(rng, nc, 0.3).map(|v| v - 0.2);
    let target = Bounds::new(lo.clone(), lo.map(|v| v + 0.4));
    let mu = (0..=horizon).map(|_| rng.random_range(0.0..50.0)).collect();
    let cost = SoftConstrainedCost::new(
        q,
        r,
        qn,
        random_vector(rng, nx, 0.5),
        DVector::zeros(nu),
        Some((
            Arc::new(SineConstraint {
                e: random_matrix(rng, nc, nx, 1.0),
                linear: false,
            }) as Arc<dyn ConstraintMap<f64>>,
            target,
        )),
        mu,
    )
    .expect("valid soft-constrained cost");
    cost.into_ocp(
        horizon,
        random_vector(rng, nx, 1.0),
        Arc::new(dynamics),
        Bounds::uniform(nu, -1.0, 1.0),
    )
}

/// Central differences of `ψ` with step `1e-6·max(1, |u_i|)`.
pub fn finite_difference_gradient(ocp: &Ocp<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(u.len());
    let mut up = u.clone();
    for i in 0..u.len() {
        let h = 1e-6 * u[i].abs().max(1.0);
        up[i] = u[i] + h;
        let fp = cost(ocp, &up).unwrap();
        up[i] = u[i] - h;
        let fm = cost(ocp, &up).unwrap();
        up[i] = u[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `∂x^k/∂u` for `k = 0..=N` by forward sensitivity propagation.
pub fn sensitivities(lin: &StageLinearization<f64>) -> Vec<DMatrix<f64>> {
    let n = lin.horizon();
    let (nx, nu) = (lin.nx(), lin.nu());
    let mut out = vec![DMatrix::zeros(nx, n * nu)];
    for k in 0..n {
        let mut next = &lin.a[k] * &out[k];
        let mut cols = next.view_mut((0, k * nu), (nx, nu));
        cols += &lin.b[k];
        out.push(next);
    }
    out
}

/// `H_GN = Σ_k J_kᵀ ∂²ℓ_k J_k` with `J_k = ∂h_k/∂x · ∂x^k/∂u + ∂h_k/∂u · E_k`,
/// built from fresh output Jacobians and cost Hessians.
pub fn dense_gn_hessian(
    ocp: &Ocp<f64>,
    traj: &Trajectory<f64>,
    lin: &StageLinearization<f64>,
    u: &DVector<f64>,
) -> DMatrix<f64> {
    let n = ocp.horizon();
    let nu = ocp.nu();
    let sens = sensitivities(lin);
    let mut h = DMatrix::zeros(n * nu, n * nu);
    for (k, sk) in sens.iter().enumerate() {
        let stage = ocp.stage(k);
        let u_k = (k < n).then(|| ocp.input_slice(u, k));
        let (jx, ju) = stage.output.jacobian(traj.x[k].as_slice(), u_k);
        let mut j = &jx * sk;
        if let Some(ju) = ju {
            let mut cols = j.view_mut((0, k * nu), (ju.nrows(), nu));
            cols += &ju;
        }
        let lam = stage.cost.hess(traj.h[k].as_slice());
        h += j.tr_mul(&(&lam * &j));
    }
    h
}

/// Condensed Hessian from the stage blocks `Q_k, S_k, R_k`.
pub fn condense_blocks(lin: &StageLinearization<f64>) -> DMatrix<f64> {
    let n = lin.horizon();
    let nu = lin.nu();
    let sens = sensitivities(lin);
    let mut h = DMatrix::zeros(n * nu, n * nu);
    for (k, sk) in sens.iter().enumerate() {
        h += sk.tr_mul(&(&lin.qm[k] * sk));
        if k < n {
            let cross = &lin.s[k] * sk; // nu × Nnu
            let mut rows = h.view_mut((k * nu, 0), (nu, n * nu));
            rows += &cross;
            let mut cols = h.view_mut((0, k * nu), (n * nu, nu));
            cols += cross.transpose();
            let mut blk = h.view_mut((k * nu, k * nu), (nu, nu));
            blk += &lin.rm[k];
        }
    }
    h
}

/// Gauss-Newton step from the dense linear Newton system
/// `H_γ Δu = −r_γ(ū)`, `H_γ = γ⁻¹I − B̂(γ⁻¹I − H_GN)`, `r_γ = −p/γ`,
/// with `B̂_ii = 0` on `K` and `1` on `J`.
pub fn dense_gn_step(h_gn: &DMatrix<f64>, state: &ProxState<f64>, sets: &IndexSets) -> DVector<f64> {
    let n = h_gn.nrows();
    let ig = 1.0 / state.gamma;
    let mut h = DMatrix::identity(n, n) * ig;
    for &j in sets.inactive() {
        for c in 0..n {
            let id = if j == c { ig } else { 0.0 };
            h[(j, c)] -= id - h_gn[(j, c)];
        }
    }
    let rhs = &state.p * ig;
    h.full_piv_lu().solve(&rhs).expect("nonsingular Newton system")
}

/// Random linear-quadratic stage data with `[Q Sᵀ; S R] ≻ 0` per stage.
pub fn random_lqr<R: Rng>(rng: &mut R, horizon: usize, nx: usize, nu: usize) -> StageLinearization<f64> {
    let mut lin = StageLinearization::default();
    for _ in 0..horizon {
        let blk = random_psd(rng, nx + nu, 0.05);
        lin.qm.push(blk.view((0, 0), (nx, nx)).into_owned());
        lin.s.push(blk.view((nx, 0), (nu, nx)).into_owned());
        lin.rm.push(blk.view((nx, nx), (nu, nu)).into_owned());
        lin.a
            .push(DMatrix::identity(nx, nx) * 0.8 + random_matrix(rng, nx, nx, 0.3));
        lin.b.push(random_matrix(rng, nx, nu, 1.0));
        lin.q.push(random_vector(rng, nx, 1.0));
        lin.r.push(random_vector(rng, nu, 1.0));
    }
    lin.qm.push(random_psd(rng, nx, 0.0));
    lin.q.push(random_vector(rng, nx, 1.0));
    lin
}

/// Solution of the dense equality-constrained QP
///
/// ```text
/// min ½ Σ [Δx;Δu]ᵀ[Q Sᵀ; S R][Δx;Δu] + ½Δx_NᵀQ_NΔx_N + Σ qᵀΔx + rᵀΔu + q_NᵀΔx_N
/// s.t. Δx⁰ = ξ, Δx^{k+1} = AΔx^k + BΔu^k, Δu_K = fixed_K
/// ```
pub struct DenseLqrSolution {
    pub du: DVector<f64>,
    pub dx: Vec<DVector<f64>>,
    /// Multiplier of `Δx⁰ = ξ`; equals `−∇V(ξ)` for the optimal value `V`.
    pub initial_multiplier: DVector<f64>,
    /// Stationarity and feasibility residual of the returned point.
    pub kkt_residual: f64,
}

pub fn dense_lqr_solve(
    lin: &StageLinearization<f64>,
    sets: &IndexSets,
    fixed: &DVector<f64>,
    xi: &DVector<f64>,
) -> DenseLqrSolution {
    let n = lin.horizon();
    let (nx, nu) = (lin.nx(), lin.nu());
    let nxv = nx * (n + 1);
    let nv = nxv + nu * n;
    let xo = |k: usize| k * nx;
    let uo = |k: usize| nxv + k * nu;

    let mut h = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    for k in 0..n {
        h.view_mut((xo(k), xo(k)), (nx, nx)).copy_from(&lin.qm[k]);
        h.view_mut((uo(k), uo(k)), (nu, nu)).copy_from(&lin.rm[k]);
        h.view_mut((uo(k), xo(k)), (nu, nx)).copy_from(&lin.s[k]);
        h.view_mut((xo(k), uo(k)), (nx, nu)).copy_from(&lin.s[k].transpose());
        g.rows_mut(xo(k), nx).copy_from(&lin.q[k]);
        g.rows_mut(uo(k), nu).copy_from(&lin.r[k]);
    }
    h.view_mut((xo(n), xo(n)), (nx, nx)).copy_from(&lin.qm[n]);
    g.rows_mut(xo(n), nx).copy_from(&lin.q[n]);

    let nk = sets.active().len();
    let nc = nxv + nk;
    let mut c = DMatrix::zeros(nc, nv);
    let mut b = DVector::zeros(nc);
    c.view_mut((0, 0), (nx, nx)).fill_with_identity();
    b.rows_mut(0, nx).copy_from(xi);
    for k in 0..n {
        let row = nx * (k + 1);
        c.view_mut((row, xo(k + 1)), (nx, nx)).fill_with_identity();
        c.view_mut((row, xo(k)), (nx, nx)).copy_from(&(-&lin.a[k]));
        c.view_mut((row, uo(k)), (nx, nu)).copy_from(&(-&lin.b[k]));
    }
    for (i, &idx) in sets.active().iter().enumerate() {
        c[(nxv + i, nxv + idx)] = 1.0;
        b[nxv + i] = fixed[idx];
    }

    let mut kkt = DMatrix::zeros(nv + nc, nv + nc);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
    kkt.view_mut((0, nv), (nv, nc)).copy_from(&c.transpose());
    kkt.view_mut((nv, 0), (nc, nv)).copy_from(&c);
    let mut rhs = DVector::zeros(nv + nc);
    rhs.rows_mut(0, nv).copy_from(&(-&g));
    rhs.rows_mut(nv, nc).copy_from(&b);
    let sol = kkt.full_piv_lu().solve(&rhs).expect("nonsingular KKT system");
    let z = sol.rows(0, nv).into_owned();
    let nu_mult = sol.rows(nv, nc).into_owned();
    let stat = &h * &z + &g + c.tr_mul(&nu_mult);
    let feas = &c * &z - &b;
    DenseLqrSolution {
        du: z.rows(nxv, nu * n).into_owned(),
        dx: (0..=n).map(|k| z.rows(xo(k), nx).into_owned()).collect(),
        initial_multiplier: nu_mult.rows(0, nx).into_owned(),
        kkt_residual: stat.amax().max(feas.amax()),
    }
}

/// Random per-stage active sets; stage 0 is fully inactive and stage 1
/// fully active when the horizon allows it.
pub fn random_index_sets<R: Rng>(rng: &mut R, horizon: usize, nu: usize) -> IndexSets {
    let mut mask = Vec::with_capacity(horizon * nu);
    for k in 0..horizon {
        for _ in 0..nu {
            mask.push(match k {
                0 => false,
                1 => true,
                _ => rng.random_bool(0.4),
            });
        }
    }
    IndexSets::from_mask(mask)
}

/// Evaluator bundle used by the unit tests of the cost families.
pub fn stage_fd_gradient(cost: &dyn StageCost<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(y.len());
    let mut yp = y.clone();
    for i in 0..y.len() {
        let h = 1e-6 * y[i].abs().max(1.0);
        yp[i] = y[i] + h;
        let fp = cost.eval(yp.as_slice());
        yp[i] = y[i] - h;
        let fm = cost.eval(yp.as_slice());
        yp[i] = y[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}
