use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use panoc_gn::{
    cost_and_gradient, forward_simulate, solve, stopping_residual, Bounds, ConstraintMap, LinearDynamics, Mode, Ocp,
    QuadraticCost, SoftConstrainedCost, SolverParams, Stage, StateInputOutput, Status, StepKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn double_integrator<T: panoc_gn::Real>(horizon: usize, umax: f64) -> Ocp<T> {
    let lit = |v: f64| T::lit(v);
    let h = 0.1;
    let a = DMatrix::from_row_slice(2, 2, &[1.0, h, 0.0, 1.0]).map(lit);
    let b = DMatrix::from_row_slice(2, 1, &[0.5 * h * h, h]).map(lit);
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.1, 0.01])).map(lit);
    let wn = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0])).map(lit);
    Ocp::uniform(
        horizon,
        DVector::from_vec(vec![lit(1.0), lit(0.0)]),
        Arc::new(LinearDynamics::new(a, b)),
        Stage::new(
            Arc::new(StateInputOutput { nx: 2, nu: 1 }),
            Arc::new(QuadraticCost::new(w, DVector::zeros(3))),
        ),
        Stage::new(
            Arc::new(StateInputOutput { nx: 2, nu: 0 }),
            Arc::new(QuadraticCost::new(wn, DVector::zeros(2))),
        ),
        Bounds::uniform(1, lit(-umax), lit(umax)),
    )
}

#[test]
fn single_and_double_precision_agree() {
    let p64 = SolverParams::<f64> {
        tol: 1e-9,
        ..Default::default()
    };
    let p32 = SolverParams::<f32> {
        tol: 1e-4,
        ..Default::default()
    };
    let s64 = solve(&double_integrator::<f64>(20, 0.5), &p64, &DVector::zeros(20)).unwrap();
    let s32 = solve(&double_integrator::<f32>(20, 0.5), &p32, &DVector::zeros(20)).unwrap();
    assert_eq!(s64.stats.status, Status::Converged);
    assert_eq!(s32.stats.status, Status::Converged);
    let diff = s64
        .u
        .iter()
        .zip(s32.u.iter())
        .map(|(a, b)| (a - *b as f64).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-3, "max difference {diff}");
    // the bound is active at the start
    assert_eq!(s64.u[0], -0.5);
}

#[test]
fn every_mode_reaches_the_same_minimizer() {
    let ocp = double_integrator::<f64>(30, 0.4);
    let u0 = DVector::zeros(30);
    let mut solutions = Vec::new();
    for mode in [Mode::GnOnly, Mode::Hybrid, Mode::LbfgsOnly, Mode::Plain] {
        let params = SolverParams {
            mode,
            tol: 1e-10,
            max_iter: 100_000,
            ..Default::default()
        };
        let out = solve(&ocp, &params, &u0).unwrap();
        assert_eq!(out.stats.status, Status::Converged, "{mode:?}");
        let (_, g) = cost_and_gradient(&ocp, &out.u).unwrap();
        assert!(stopping_residual(&out.u, &g, ocp.bounds()) <= 1e-9);
        solutions.push((mode, out));
    }
    let gn = &solutions[0].1;
    for (mode, out) in &solutions[1..] {
        assert!((&out.u - &gn.u).amax() < 1e-8, "{mode:?}");
    }
}

/// `z = x_0` with target `(−∞, 0.3]`.
struct PositionCap;

impl ConstraintMap<f64> for PositionCap {
    fn nz(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
    }
}

fn capped_tracking(mu: f64, horizon: usize) -> Ocp<f64> {
    let h = 0.1;
    let a = DMatrix::from_row_slice(2, 2, &[1.0, h, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.5 * h * h, h]);
    let cost = SoftConstrainedCost::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
        DMatrix::from_element(1, 1, 0.01),
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::zeros(1),
        Some((
            Arc::new(PositionCap) as Arc<dyn ConstraintMap<f64>>,
            Bounds::new(
                DVector::from_element(1, f64::NEG_INFINITY),
                DVector::from_element(1, 0.3),
            ),
        )),
        vec![mu; horizon + 1],
    )
    .unwrap();
    cost.into_ocp(
        horizon,
        DVector::zeros(2),
        Arc::new(LinearDynamics::new(a, b)),
        Bounds::uniform(1, -2.0, 2.0),
    )
}

#[test]
fn penalty_weight_tightens_the_soft_constraint() {
    let horizon = 25;
    let mut last = f64::INFINITY;
    let mut previous = f64::INFINITY;
    for mu in [0.0, 1.0, 10.0, 100.0, 1000.0] {
        let ocp = capped_tracking(mu, horizon);
        let params = SolverParams {
            mode: Mode::Hybrid,
            k_gn: 5,
            ..Default::default()
        };
        let out = solve(&ocp, &params, &DVector::zeros(horizon)).unwrap();
        assert_eq!(out.stats.status, Status::Converged);
        let traj = forward_simulate(&ocp, &out.u).unwrap();
        let violation = traj.x.iter().map(|x| (x[0] - 0.3).max(0.0)).fold(0.0, f64::max);
        assert!(
            violation < last,
            "μ = {mu}: violation {violation} did not shrink from {last}"
        );
        (previous, last) = (last, violation);
    }
    // O(1/μ)
    assert!(last < 0.2 * previous);
    assert!(last < 5e-3);
}

#[test]
fn stationary_start_takes_no_iterations() {
    let ocp = double_integrator::<f64>(10, 1.0);
    let params = SolverParams {
        tol: 1e-9,
        ..Default::default()
    };
    let sol = solve(&ocp, &params, &DVector::zeros(10)).unwrap();
    let again = solve(
        &ocp,
        &SolverParams {
            record_trace: true,
            ..params
        },
        &sol.u,
    )
    .unwrap();
    assert_eq!(again.stats.iterations, 0);
    assert_eq!(again.trace.len(), 1);
    assert_eq!(again.trace[0].kind, StepKind::Start);
}

fn random_linear(seed: u64, horizon: usize, umax: f64) -> (Ocp<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu) = (3, 2);
    let a = DMatrix::from_fn(
        nx,
        nx,
        |i, j| if i == j { 0.9 } else { 0.0 } + rng.random_range(-0.3..0.3),
    );
    let b = DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(nx, |_, _| rng.random_range(-2.0..2.0));
    let ocp = Ocp::uniform(
        horizon,
        x0,
        Arc::new(LinearDynamics::new(a, b)),
        Stage::new(
            Arc::new(StateInputOutput { nx, nu }),
            Arc::new(QuadraticCost::identity(nx + nu)),
        ),
        Stage::new(
            Arc::new(StateInputOutput { nx, nu: 0 }),
            Arc::new(QuadraticCost::identity(nx)),
        ),
        Bounds::uniform(nu, -umax, umax),
    );
    let u0 = DVector::from_fn(horizon * nu, |_, _| rng.random_range(-umax..umax));
    (ocp, u0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solutions_are_feasible_and_traces_monotone(
        seed in any::<u64>(),
        horizon in 1usize..15,
        umax in 0.05f64..2.0,
        k_gn in 1usize..6,
        mode_ix in 0usize..4,
    ) {
        let mode = [Mode::GnOnly, Mode::Hybrid, Mode::LbfgsOnly, Mode::Plain][mode_ix];
        let (ocp, u0) = random_linear(seed, horizon, umax);
        let params = SolverParams { mode, k_gn, tol: 1e-8, max_iter: 20_000, record_trace: true, ..Default::default() };
        let out = solve(&ocp, &params, &u0).unwrap();
        prop_assert_eq!(out.stats.status, Status::Converged);
        prop_assert!(out.u.iter().all(|v| v.abs() <= umax));
        prop_assert_eq!(out.trace.len(), out.stats.iterations + 1);
        for w in out.trace.windows(2) {
            prop_assert!(w[1].gamma <= w[0].gamma);
            if w[1].gamma == w[0].gamma {
                prop_assert!(w[1].fbe <= w[0].fbe + 1e-9 * (1.0 + w[0].fbe.abs()));
            }
        }
        if mode == Mode::Plain {
            prop_assert!(out.trace[1..].iter().all(|r| r.kind == StepKind::ForwardBackward));
        }
    }
}
