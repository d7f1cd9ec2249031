//! Gauss-Newton step as an equality-constrained LQR problem.
//!
//! The Gauss-Newton subproblem with the active inputs pinned,
//!
//! ```text
//! min  ½ΔuᵀH_GN Δu + ∇ψᵀΔu   s.t.  Δu_K = p_K,
//! ```
//!
//! is a finite-horizon LQR problem in `(Δx, Δu)`. [`eliminate_active`]
//! substitutes the pinned inputs, [`lqr_factor`] runs the backward Riccati
//! recursion and [`lqr_solve`] the forward rollout. Cost is linear in `N`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::prox::{IndexSets, ProxState};
use crate::scalar::Real;
use crate::shooting::StageLinearization;

/// Stage data of the reduced problem after eliminating `Δu_K`.
#[derive(Debug, Clone)]
pub struct EliminatedStage<T: Real> {
    /// Stage-local `K_k`.
    pub active: Vec<usize>,
    /// Stage-local `J_k`.
    pub inactive: Vec<usize>,
    /// `Ŝ = S[J,·]`.
    pub s_hat: DMatrix<T>,
    /// `R̂ = R[J,J]`.
    pub r_hat: DMatrix<T>,
    /// `q̂ = q + S[K,·]ᵀΔu_K`.
    pub q_hat: DVector<T>,
    /// `r̂ = r_J + R[J,K]Δu_K`.
    pub r_lin_hat: DVector<T>,
    /// `B̂ = B[·,J]`.
    pub b_hat: DMatrix<T>,
    /// `ĉ = B[·,K]Δu_K`.
    pub c_hat: DVector<T>,
    /// `Δu_K`.
    pub du_active: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct EliminatedLqr<T: Real> {
    pub stages: Vec<EliminatedStage<T>>,
    /// `q̂_N = q_N`.
    pub q_terminal: DVector<T>,
}

/// Substitutes the fixed inputs `Δu_K` into the stage data.
///
/// `fixed` is a horizon-length vector; only its entries at indices in `K`
/// are read.
pub fn eliminate_active<T: Real>(
    lin: &StageLinearization<T>,
    sets: &IndexSets,
    fixed: &DVector<T>,
) -> EliminatedLqr<T> {
    let n = lin.horizon();
    let nu = lin.nu();
    let stages = (0..n)
        .map(|k| {
            let (act, inact) = sets.stage(k, nu);
            let du_active = DVector::from_iterator(act.len(), act.iter().map(|&i| fixed[k * nu + i]));
            let s = &lin.s[k];
            let r = &lin.rm[k];
            let b = &lin.b[k];
            let s_hat = s.select_rows(inact.iter());
            let r_hat = r.select_rows(inact.iter()).select_columns(inact.iter());
            let b_hat = b.select_columns(inact.iter());
            let r_j = DVector::from_iterator(inact.len(), inact.iter().map(|&i| lin.r[k][i]));
            let (q_hat, r_lin_hat, c_hat) = if act.is_empty() {
                (lin.q[k].clone(), r_j, DVector::zeros(b.nrows()))
            } else {
                let s_k = s.select_rows(act.iter());
                let r_jk = r.select_rows(inact.iter()).select_columns(act.iter());
                let b_k = b.select_columns(act.iter());
                (
                    &lin.q[k] + s_k.tr_mul(&du_active),
                    r_j + r_jk * &du_active,
                    b_k * &du_active,
                )
            };
            EliminatedStage {
                active: act,
                inactive: inact,
                s_hat,
                r_hat,
                q_hat,
                r_lin_hat,
                b_hat,
                c_hat,
                du_active,
            }
        })
        .collect();
    EliminatedLqr {
        stages,
        q_terminal: lin.q[n].clone(),
    }
}

/// Cost-to-go `½ΔxᵀP_kΔx + s_kᵀΔx` and the affine feedback
/// `Δu^k_J = K_kΔx^k + e_k` per stage.
#[derive(Debug, Clone)]
pub struct RiccatiFactor<T: Real> {
    pub p: Vec<DMatrix<T>>,
    pub s: Vec<DVector<T>>,
    pub gain: Vec<DMatrix<T>>,
    pub feedforward: Vec<DVector<T>>,
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Backward Riccati recursion on the reduced problem.
///
/// Fails with [`Error::IndefiniteRbar`] when `R̄_k = R̂_k + B̂ᵀP_{k+1}B̂` has
/// no Cholesky factorization.
pub fn lqr_factor<T: Real>(elim: &EliminatedLqr<T>, lin: &StageLinearization<T>) -> Result<RiccatiFactor<T>> {
    let n = lin.horizon();
    let mut p = vec![DMatrix::zeros(0, 0); n + 1];
    let mut s = vec![DVector::zeros(0); n + 1];
    let mut gain = vec![DMatrix::zeros(0, 0); n];
    let mut feedforward = vec![DVector::zeros(0); n];
    p[n] = lin.qm[n].clone();
    s[n] = elim.q_terminal.clone();

    for k in (0..n).rev() {
        let st = &elim.stages[k];
        let a = &lin.a[k];
        let p_next = &p[k + 1];
        let pa = p_next * a;
        let mut pk = &lin.qm[k] + a.tr_mul(&pa);
        let y = p_next * &st.c_hat + &s[k + 1];
        let mut sk = a.tr_mul(&y) + &st.q_hat;
        let nj = st.inactive.len();
        if nj > 0 {
            let pb = p_next * &st.b_hat;
            let rbar = &st.r_hat + st.b_hat.tr_mul(&pb);
            let sbar = &st.s_hat + pb.tr_mul(a);
            let chol = rbar.cholesky().ok_or(Error::IndefiniteRbar(k))?;
            let kk = -chol.solve(&sbar);
            let e = -chol.solve(&(st.b_hat.tr_mul(&y) + &st.r_lin_hat));
            sk += sbar.tr_mul(&e);
            pk += sbar.tr_mul(&kk);
            gain[k] = kk;
            feedforward[k] = e;
        } else {
            gain[k] = DMatrix::zeros(0, a.ncols());
            feedforward[k] = DVector::zeros(0);
        }
        symmetrize(&mut pk);
        p[k] = pk;
        s[k] = sk;
    }
    Ok(RiccatiFactor {
        p,
        s,
        gain,
        feedforward,
    })
}

/// Forward rollout of the feedback law from `Δx⁰ = 0`.
///
/// Returns the full `Δu` (pinned entries included) and `Δx⁰ ..= Δx^N`.
pub fn lqr_solve<T: Real>(
    factor: &RiccatiFactor<T>,
    lin: &StageLinearization<T>,
    elim: &EliminatedLqr<T>,
) -> (DVector<T>, Vec<DVector<T>>) {
    let n = lin.horizon();
    let nu = lin.nu();
    let mut du = DVector::zeros(n * nu);
    let mut dx = Vec::with_capacity(n + 1);
    dx.push(DVector::zeros(lin.nx()));
    for k in 0..n {
        let st = &elim.stages[k];
        let mut du_k = DVector::zeros(nu);
        for (j, &i) in st.active.iter().enumerate() {
            du_k[i] = st.du_active[j];
        }
        if !st.inactive.is_empty() {
            let du_j = &factor.gain[k] * &dx[k] + &factor.feedforward[k];
            for (j, &i) in st.inactive.iter().enumerate() {
                du_k[i] = du_j[j];
            }
        }
        let next = &lin.a[k] * &dx[k] + &lin.b[k] * &du_k;
        du.rows_mut(k * nu, nu).copy_from(&du_k);
        dx.push(next);
    }
    (du, dx)
}

/// Gauss-Newton direction at `state.u`.
///
/// Active inputs take the forward-backward step, `Δu_K = p_K`; the inactive
/// ones solve the reduced LQR problem. `lin` must hold the curvature blocks.
pub fn gauss_newton_step<T: Real>(
    state: &ProxState<T>,
    lin: &StageLinearization<T>,
    sets: &IndexSets,
) -> Result<DVector<T>> {
    debug_assert!(lin.has_curvature(), "Gauss-Newton step needs Q, S, R blocks");
    let elim = eliminate_active(lin, sets, &state.p);
    let factor = lqr_factor(&elim, lin)?;
    Ok(lqr_solve(&factor, lin, &elim).0)
}
