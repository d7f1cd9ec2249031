use chain_bench::{equilibrium, ChainError, ChainModel, ChainParams, ContinuousModel};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, p: &ChainParams) -> DVector<f64> {
    let x_eq = equilibrium(p).unwrap();
    x_eq.map(|v| v + rng.random_range(-0.05..0.05))
}

#[test]
fn resting_chain_has_zero_derivative() {
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    let x = equilibrium(&p).unwrap();
    assert!(model.f(&x, &DVector::zeros(3)).amax() < 1e-10);
}

#[test]
fn single_mass_at_rest_length_feels_no_force() {
    let p = ChainParams {
        n_balls: 1,
        gravity: 0.0,
        rest_length: 0.5,
        ..Default::default()
    };
    let model = ChainModel::new(&p);
    let x = DVector::from_vec(vec![0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(model.f(&x, &DVector::zeros(3)), DVector::zeros(9));
}

#[test]
fn spring_forces_scale_with_spring_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = ChainParams {
        gravity: 0.0,
        ..Default::default()
    };
    let x = random_state(&mut rng, &p);
    let u = DVector::zeros(3);
    let stiff = ChainParams {
        spring_constant: 2.0 * p.spring_constant,
        ..p.clone()
    };
    let (f1, f2) = (ChainModel::new(&p).f(&x, &u), ChainModel::new(&stiff).f(&x, &u));
    let vel = 3 * (p.n_balls + 1);
    for i in vel..p.nx() {
        assert!((f2[i] - 2.0 * f1[i]).abs() < 1e-12 * (1.0 + f1[i].abs()));
    }
    assert_eq!(f1.rows(0, vel), f2.rows(0, vel));
}

#[test]
fn actuator_integrates_input() {
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    let x = equilibrium(&p).unwrap();
    let u = DVector::from_vec(vec![0.3, -0.2, 0.1]);
    let f = model.f(&x, &u);
    assert_eq!(f.rows(3 * p.n_balls, 3), u.rows(0, 3));
}

#[test]
fn jvp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    for _ in 0..5 {
        let x = random_state(&mut rng, &p);
        let u = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let dx = DVector::from_fn(p.nx(), |_, _| rng.random_range(-1.0..1.0));
        let du = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let h = 1e-6;
        let fd = (model.f(&(&x + &dx * h), &(&u + &du * h)) - model.f(&(&x - &dx * h), &(&u - &du * h))) / (2.0 * h);
        let jvp = model.jvp(&x, &u, &dx, &du);
        assert!((&jvp - &fd).amax() < 1e-6 * (1.0 + fd.amax()));
    }
}

#[test]
fn vjp_is_adjoint_of_jvp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    let x = random_state(&mut rng, &p);
    let u = DVector::zeros(3);
    for _ in 0..10 {
        let dx = DVector::from_fn(p.nx(), |_, _| rng.random_range(-1.0..1.0));
        let du = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let w = DVector::from_fn(p.nx(), |_, _| rng.random_range(-1.0..1.0));
        let (wx, wu) = model.vjp(&x, &u, &w);
        let lhs = w.dot(&model.jvp(&x, &u, &dx, &du));
        let rhs = wx.dot(&dx) + wu.dot(&du);
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }
}

#[test]
fn coincident_masses_are_reported() {
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    let mut x = equilibrium(&p).unwrap();
    for c in 0..3 {
        x[3 + c] = x[c];
    }
    let err = model.try_derivative(&x, &DVector::zeros(3)).unwrap_err();
    assert_eq!(err, ChainError::SingularSpring { spring: 1 });
    assert!(model.f(&x, &DVector::zeros(3)).iter().any(|v| v.is_nan()));
}

#[test]
fn params_validation() {
    assert!(ChainParams::default().validate().is_ok());
    for bad in [
        ChainParams {
            mass: 0.0,
            ..Default::default()
        },
        ChainParams {
            n_balls: 0,
            ..Default::default()
        },
        ChainParams {
            dt: -0.1,
            ..Default::default()
        },
        ChainParams {
            horizon: 0,
            ..Default::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(ChainError::InvalidParams(_))));
    }
}

#[test]
fn batched_jvp_matches_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    let x = random_state(&mut rng, &p);
    let u = DVector::zeros(3);
    let dx = nalgebra::DMatrix::from_fn(p.nx(), 5, |_, _| rng.random_range(-1.0..1.0));
    let du = nalgebra::DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
    let batch = model.jvp_mat(&x, &u, &dx, &du);
    for c in 0..5 {
        let col = model.jvp(&x, &u, &dx.column(c).into_owned(), &du.column(c).into_owned());
        assert!((batch.column(c) - col).amax() < 1e-14);
    }
}
