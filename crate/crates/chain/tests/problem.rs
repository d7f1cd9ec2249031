use chain_bench::{ChainParams, ChainProblem};
use nalgebra::DVector;
use panoc_gn::shooting::cost_and_gradient;
use panoc_gn::testing::finite_difference_gradient;
use panoc_gn::validate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn default_dimensions() {
    let prob = ChainProblem::new(ChainParams::default()).unwrap();
    let ocp = prob.ocp(prob.x_eq.clone()).unwrap();
    assert_eq!(ocp.nx(), 39);
    assert_eq!(ocp.nu(), 3);
    assert_eq!(ocp.horizon(), 40);
    assert_eq!(ocp.bounds().len(), 120);
    assert!(ocp.bounds().lb.iter().all(|&v| v == -1.0));
    assert!(ocp.bounds().ub.iter().all(|&v| v == 1.0));
}

#[test]
fn zero_input_at_rest_costs_nothing() {
    let prob = ChainProblem::new(ChainParams::default()).unwrap();
    let ocp = prob.ocp(prob.x_eq.clone()).unwrap();
    let (psi, g) = cost_and_gradient(&ocp, &DVector::zeros(120)).unwrap();
    assert!(psi.abs() < 1e-18);
    assert!(g.amax() < 1e-9);
}

#[test]
fn assembled_problem_validates() {
    for steps in [0, 50] {
        let prob = ChainProblem::new(ChainParams {
            terminal_riccati_steps: steps,
            ..Default::default()
        })
        .unwrap();
        let ocp = prob.ocp(prob.disturb(&[[-1.0, 1.0, 1.0]; 5])).unwrap();
        let report = validate(&ocp);
        assert!(report.is_ok(), "{report}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prob = ChainProblem::new(ChainParams {
        horizon: 10,
        ..Default::default()
    })
    .unwrap();
    let ocp = prob.ocp(prob.disturb(&[[0.5, -0.5, 1.0]; 5])).unwrap();
    let u = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
    let (_, g) = cost_and_gradient(&ocp, &u).unwrap();
    let fd = finite_difference_gradient(&ocp, &u);
    assert!((&g - &fd).amax() < 1e-6 * (1.0 + fd.amax()));
}

#[test]
fn disturbance() {
    let prob = ChainProblem::new(ChainParams::default()).unwrap();
    assert!((prob.disturb(&[[0.0; 3]; 5]) - &prob.x_eq).amax() < 1e-10);
    let a = prob.disturb(&[[-1.0, 1.0, 1.0]; 5]);
    let b = prob.disturb(&[[-1.0, 1.0, 1.0]; 5]);
    assert_eq!(a, b);
    let n = prob.params.n_balls;
    // the free end moved 0.5 m along each axis
    for (c, d) in [-0.5, 0.5, 0.5].iter().enumerate() {
        assert!((a[3 * n + c] - prob.params.target[c] - d).abs() < 1e-12);
    }
}

#[test]
fn terminal_weight_dominates_stage_weight() {
    let prob = ChainProblem::new(ChainParams {
        terminal_riccati_steps: 50,
        ..Default::default()
    })
    .unwrap();
    let diff = &prob.q_terminal - nalgebra::DMatrix::identity(39, 39);
    assert!(diff.symmetric_eigenvalues().min() > -1e-9);
}
