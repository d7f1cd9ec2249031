//! PANOC⁺ outer loop with Gauss-Newton and structured L-BFGS acceleration.
//!
//! Each iteration computes a direction `Δu` and searches along
//!
//! ```text
//! u⁺ = u + (1 − τ)p + τΔu,     τ = 1, ½, ¼, …
//! ```
//!
//! accepting the first `u⁺` whose forward-backward envelope decreases
//! sufficiently. A failed quadratic upper bound at `u⁺` halves `γ` and
//! restarts the iteration.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lbfgs::{structured_lbfgs_direction, LbfgsBuffer};
use crate::problem::{Bounds, Ocp};
use crate::prox::{project_box, ProxState};
use crate::riccati::gauss_newton_step;
use crate::scalar::Real;
use crate::shooting::{
    assemble_gn_data, backward_gradient, cost, forward_simulate, gradient_with_noise, StageLinearization, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Gauss-Newton direction on every iteration.
    GnOnly,
    /// Gauss-Newton every `k_gn` iterations, structured L-BFGS otherwise.
    Hybrid,
    LbfgsOnly,
    /// No acceleration: every iteration is a projected gradient step.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams<T: Real> {
    /// Initial step size. `None` estimates it from a finite difference at `u0`.
    pub gamma0: Option<T>,
    pub alpha: T,
    pub beta: T,
    pub tol: T,
    pub max_iter: usize,
    pub k_gn: usize,
    pub lbfgs_mem: usize,
    pub tau_min: T,
    pub mode: Mode,
    pub max_gamma_halvings: usize,
    /// Both line-search tests tolerate violations up to
    /// `roundoff_factor·ε_mach·(ν + Σ|terms|)`, with `ν` the rounding scale of
    /// `ψ` from [`gradient_with_noise`](crate::shooting::gradient_with_noise).
    pub roundoff_factor: T,
    pub record_trace: bool,
}

impl<T: Real> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            gamma0: None,
            alpha: T::lit(0.95),
            beta: T::lit(0.5),
            tol: T::lit(1e-10),
            max_iter: 10_000,
            k_gn: 10,
            lbfgs_mem: 40,
            tau_min: T::lit(1.0 / 1024.0),
            mode: Mode::Hybrid,
            max_gamma_halvings: 64,
            roundoff_factor: T::lit(10.0),
            record_trace: true,
        }
    }
}

impl<T: Real> SolverParams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v < T::one();
        let bad = |m: &str| Err(Error::InvalidParams(m.to_owned()));
        if let Some(g) = self.gamma0 {
            if !(g > T::zero() && g.is_finite()) {
                return bad("gamma0 must be positive");
            }
        }
        if !unit(self.alpha) {
            return bad("alpha must lie in (0, 1)");
        }
        if !unit(self.beta) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.roundoff_factor >= T::zero()) {
            return bad("roundoff_factor must be nonnegative");
        }
        if !(self.tol > T::zero()) {
            return bad("tol must be positive");
        }
        if self.k_gn == 0 {
            return bad("k_gn must be at least 1");
        }
        if self.lbfgs_mem == 0 {
            return bad("lbfgs_mem must be at least 1");
        }
        if !unit(self.tau_min) {
            return bad("tau_min must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Status {
    Converged,
    #[default]
    MaxIter,
    LineSearchFail,
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Record of the starting point.
    Start,
    GaussNewton,
    Lbfgs,
    /// `τ = 0`: `u⁺ = û`.
    ForwardBackward,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub gn_steps_computed: usize,
    /// Accepted with `τ > 0`.
    pub gn_steps_accepted: usize,
    pub gn_steps_accepted_unit: usize,
    pub lbfgs_steps: usize,
    pub fb_steps: usize,
    pub gamma_halvings: usize,
    pub tau_halvings: usize,
    pub final_residual: f64,
    pub psi_final: f64,
    pub gamma_final: f64,
    pub wall_time: Duration,
    pub status: Status,
}

/// State after iteration `iter`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T: Real> {
    pub iter: usize,
    pub gamma: T,
    pub tau: T,
    pub kind: StepKind,
    pub psi: T,
    pub fbe: T,
    pub residual: T,
    pub p_norm: T,
    /// Rounding scale `ν` of `ψ` at the iterate.
    pub noise: T,
}

#[derive(Debug, Clone)]
pub struct SolveOutput<T: Real> {
    /// `T_γ(u)` at the final iterate.
    pub u: DVector<T>,
    /// The final iterate itself.
    pub u_last: DVector<T>,
    pub stats: SolverStats,
    pub trace: Vec<TraceRecord<T>>,
}

/// `‖u − Π_U(u − ∇ψ(u))‖`.
pub fn stopping_residual<T: Real>(u: &DVector<T>, grad_psi: &DVector<T>, bounds: &Bounds<T>) -> T {
    (u - project_box(&(u - grad_psi), bounds)).norm()
}

/// Secant estimate of the gradient's Lipschitz constant at `u`.
pub fn estimate_lipschitz<T: Real>(ocp: &Ocp<T>, u: &DVector<T>, grad: &DVector<T>) -> Option<T> {
    let rel = T::lit(1e-6);
    let h = u.map(|v| (v.abs() * rel).max(rel));
    let g = cost_and_grad(ocp, &(u + &h)).ok()?.1;
    let l = (g - grad).norm() / h.norm();
    (l.is_finite() && l > T::zero()).then_some(l)
}

struct Current<T: Real> {
    st: ProxState<T>,
    traj: Trajectory<T>,
    psi_hat: T,
    noise: T,
}

fn cost_and_grad<T: Real>(ocp: &Ocp<T>, u: &DVector<T>) -> Result<(Trajectory<T>, DVector<T>, T)> {
    let traj = forward_simulate(ocp, u)?;
    let (g, noise) = gradient_with_noise(ocp, u, &traj)?;
    if g.iter().all(|v| v.is_finite()) {
        Ok((traj, g, noise))
    } else {
        Err(Error::NonFiniteCost { stage: 0 })
    }
}

fn slack<T: Real>(factor: T, terms: &[T]) -> T {
    let mag = terms.iter().fold(T::zero(), |a, t| a + t.abs());
    factor * T::default_epsilon() * mag
}

/// `ψ(û) ≤ ψ(u) + ⟨∇ψ, p⟩ + α/(2γ)‖p‖²`.
fn upper_bound_holds<T: Real>(st: &ProxState<T>, psi_hat: T, noise: T, params: &SolverParams<T>) -> bool {
    let lin = st.grad_psi.dot(&st.p);
    let quad = params.alpha * st.p.norm_squared() / (T::lit(2.0) * st.gamma);
    psi_hat <= st.psi_u + lin + quad + slack(params.roundoff_factor, &[noise, st.psi_u, lin, quad, psi_hat])
}

fn fbe_decrease<T: Real>(cur: &ProxState<T>, beta: T, alpha: T) -> T {
    beta * (T::one() - alpha) / (T::lit(2.0) * cur.gamma) * cur.p.norm_squared()
}

struct Run<'a, T: Real> {
    ocp: &'a Ocp<T>,
    params: &'a SolverParams<T>,
    stats: SolverStats,
}

impl<T: Real> Run<'_, T> {
    fn halve_gamma(&mut self, gamma: &mut T) -> Result<()> {
        *gamma *= T::lit(0.5);
        self.stats.gamma_halvings += 1;
        if self.stats.gamma_halvings > self.params.max_gamma_halvings {
            return Err(Error::StepSizeCollapse {
                halvings: self.stats.gamma_halvings,
            });
        }
        Ok(())
    }

    /// Halves `γ` at a fixed point until the upper bound holds there.
    fn settle(
        &mut self,
        u: DVector<T>,
        traj: Trajectory<T>,
        grad: DVector<T>,
        noise: T,
        gamma: &mut T,
    ) -> Result<Current<T>> {
        let bounds = self.ocp.bounds();
        let mut st = ProxState::new(u, traj.psi, grad, *gamma, bounds);
        loop {
            let psi_hat = cost(self.ocp, &st.u_hat).unwrap_or(T::max_value().unwrap());
            if upper_bound_holds(&st, psi_hat, noise, self.params) {
                return Ok(Current {
                    st,
                    traj,
                    psi_hat,
                    noise,
                });
            }
            self.halve_gamma(gamma)?;
            st = ProxState::new(st.u, st.psi_u, st.grad_psi, *gamma, bounds);
        }
    }

    fn gn_data(&self, cur: &Current<T>) -> Result<StageLinearization<T>> {
        let (_, mut lin) = backward_gradient(self.ocp, &cur.st.u, &cur.traj)?;
        assemble_gn_data(self.ocp, &cur.st.u, &cur.traj, &mut lin)?;
        Ok(lin)
    }
}

enum Outcome<T: Real> {
    Accepted {
        next: Current<T>,
        tau: T,
        kind: StepKind,
        gamma_changed: bool,
    },
    Stop(Status),
}

fn record<T: Real>(iter: usize, tau: T, kind: StepKind, cur: &Current<T>, bounds: &Bounds<T>) -> TraceRecord<T> {
    TraceRecord {
        iter,
        gamma: cur.st.gamma,
        tau,
        kind,
        psi: cur.st.psi_u,
        fbe: cur.st.fbe,
        residual: stopping_residual(&cur.st.u, &cur.st.grad_psi, bounds),
        p_norm: cur.st.p.norm(),
        noise: cur.noise,
    }
}

/// Runs PANOC⁺ from `u0`.
///
/// Returns `Err` for invalid input, a non-finite cost at `u0` or a collapsed
/// step size. Solver outcomes such as [`Status::MaxIter`] are reported in
/// the stats.
pub fn solve<T: Real>(ocp: &Ocp<T>, params: &SolverParams<T>, u0: &DVector<T>) -> Result<SolveOutput<T>> {
    params.validate()?;
    if u0.len() != ocp.n_inputs() {
        return Err(Error::Dimension {
            what: "initial guess".into(),
            expected: ocp.n_inputs(),
            found: u0.len(),
        });
    }
    let start = Instant::now();
    let bounds = ocp.bounds();
    let mut run = Run {
        ocp,
        params,
        stats: SolverStats::default(),
    };

    let (traj, grad, noise) = cost_and_grad(ocp, u0)?;
    let mut gamma = match params.gamma0 {
        Some(g) => g,
        None => T::lit(0.95) / estimate_lipschitz(ocp, u0, &grad).unwrap_or(T::one()),
    };
    let mut cur = run.settle(u0.clone(), traj, grad, noise, &mut gamma)?;
    let mut trace = Vec::new();
    if params.record_trace {
        trace.push(record(0, T::zero(), StepKind::Start, &cur, bounds));
    }

    let uses_lbfgs = matches!(params.mode, Mode::Hybrid | Mode::LbfgsOnly);
    let mut lbfgs = LbfgsBuffer::new(params.lbfgs_mem);
    let mut streak = false;
    let mut next_gn = 0usize;
    let half = T::lit(0.5);

    let status = loop {
        if stopping_residual(&cur.st.u, &cur.st.grad_psi, bounds) <= params.tol {
            break Status::Converged;
        }
        let it = run.stats.iterations;
        if it == params.max_iter {
            break Status::MaxIter;
        }
        let mut want_gn = match params.mode {
            Mode::GnOnly => true,
            Mode::Hybrid => streak || it >= next_gn,
            Mode::LbfgsOnly | Mode::Plain => false,
        };
        let mut lin: Option<StageLinearization<T>> = None;
        let mut gamma_changed = false;
        let mut gn_counted = false;

        let outcome = 'direction: loop {
            let sets = cur.st.index_sets(bounds);
            let mut direction = None;
            if want_gn {
                if lin.is_none() {
                    lin = Some(run.gn_data(&cur)?);
                }
                match gauss_newton_step(&cur.st, lin.as_ref().unwrap(), &sets) {
                    Ok(du) => {
                        if !gn_counted {
                            run.stats.gn_steps_computed += 1;
                            gn_counted = true;
                        }
                        direction = Some((du, StepKind::GaussNewton));
                    }
                    Err(Error::IndefiniteRbar(_)) if params.mode == Mode::GnOnly => {
                        break 'direction Outcome::Stop(Status::Indefinite);
                    }
                    Err(Error::IndefiniteRbar(_)) => {
                        want_gn = false;
                        streak = false;
                        next_gn = it + params.k_gn;
                    }
                    Err(e) => return Err(e),
                }
            }
            if direction.is_none() && uses_lbfgs {
                direction = Some((structured_lbfgs_direction(&lbfgs, &cur.st, &sets), StepKind::Lbfgs));
            }

            let decrease = fbe_decrease(&cur.st, params.beta, params.alpha);
            let mut tau = if direction.is_some() { T::one() } else { T::zero() };
            loop {
                let cand = match &direction {
                    Some((du, _)) if tau > T::zero() => &cur.st.u + &cur.st.p * (T::one() - tau) + du * tau,
                    _ => cur.st.u_hat.clone(),
                };
                let eval = cost_and_grad(ocp, &cand);
                if let Ok((traj_c, g_c, noise_c)) = eval {
                    let st_c = ProxState::new(cand, traj_c.psi, g_c, gamma, bounds);
                    let psi_hat_c = cost(ocp, &st_c.u_hat).unwrap_or(T::max_value().unwrap());
                    if !upper_bound_holds(&st_c, psi_hat_c, noise_c, params) {
                        run.halve_gamma(&mut gamma)?;
                        gamma_changed = true;
                        lbfgs.clear();
                        let Current { st, traj, noise, .. } = cur;
                        cur = run.settle(st.u, traj, st.grad_psi, noise, &mut gamma)?;
                        continue 'direction;
                    }
                    let bound = cur.st.fbe - decrease;
                    let tol = slack(
                        params.roundoff_factor,
                        &[cur.noise, noise_c, cur.st.fbe, st_c.fbe, decrease],
                    );
                    if st_c.fbe <= bound + tol {
                        let kind = match &direction {
                            Some((_, kind)) if tau > T::zero() => *kind,
                            _ => StepKind::ForwardBackward,
                        };
                        let next = Current {
                            st: st_c,
                            traj: traj_c,
                            psi_hat: psi_hat_c,
                            noise: noise_c,
                        };
                        break 'direction Outcome::Accepted {
                            next,
                            tau,
                            kind,
                            gamma_changed,
                        };
                    }
                }
                if tau == T::zero() {
                    break 'direction Outcome::Stop(Status::LineSearchFail);
                }
                tau *= half;
                run.stats.tau_halvings += 1;
                if tau < params.tau_min {
                    tau = T::zero();
                }
            }
        };

        let (next, tau, kind, gamma_changed) = match outcome {
            Outcome::Stop(status) => break status,
            Outcome::Accepted {
                next,
                tau,
                kind,
                gamma_changed,
            } => (next, tau, kind, gamma_changed),
        };

        if want_gn {
            streak = kind == StepKind::GaussNewton && tau == T::one();
            next_gn = it + params.k_gn;
        }
        match kind {
            StepKind::GaussNewton => {
                run.stats.gn_steps_accepted += 1;
                if tau == T::one() {
                    run.stats.gn_steps_accepted_unit += 1;
                }
            }
            StepKind::Lbfgs => run.stats.lbfgs_steps += 1,
            _ => run.stats.fb_steps += 1,
        }
        if uses_lbfgs {
            if kind == StepKind::GaussNewton {
                lbfgs.clear();
            } else {
                let s = &next.st.u - &cur.st.u;
                let y = &next.st.grad_psi - &cur.st.grad_psi;
                lbfgs.update(s, y);
            }
        }
        if !gamma_changed {
            debug_assert!(
                next.st.fbe
                    <= cur.st.fbe
                        + slack(
                            params.roundoff_factor,
                            &[cur.noise, next.noise, cur.st.fbe, next.st.fbe]
                        )
            );
        }
        cur = next;
        run.stats.iterations += 1;
        if params.record_trace {
            trace.push(record(run.stats.iterations, tau, kind, &cur, bounds));
        }
    };

    let mut stats = run.stats;
    stats.status = status;
    stats.final_residual = stopping_residual(&cur.st.u, &cur.st.grad_psi, bounds).as_f64();
    stats.psi_final = cur.psi_hat.as_f64();
    stats.gamma_final = gamma.as_f64();
    stats.wall_time = start.elapsed();
    Ok(SolveOutput {
        u: cur.st.u_hat,
        u_last: cur.st.u,
        stats,
        trace,
    })
}
