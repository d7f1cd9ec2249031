use chain_bench::{equilibrium, rk4_step, ChainModel, ChainParams, ContinuousModel, Rk4};
use nalgebra::DVector;
use panoc_gn::Dynamics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_field_leaves_state_unchanged() {
    let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
    let x1 = rk4_step(|x, _| DVector::zeros(x.len()), &x, &DVector::zeros(1), 0.3);
    assert_eq!(x1, x);
}

#[test]
fn linear_scalar_ode_gives_taylor_polynomial() {
    for (lambda, dt) in [(-1.3, 0.1), (0.7, 0.25), (-20.0, 0.01)] {
        let z: f64 = lambda * dt;
        let taylor = 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0;
        let x = DVector::from_element(1, 2.0);
        let x1 = rk4_step(|x, _| x * lambda, &x, &DVector::zeros(0), dt);
        assert!((x1[0] / 2.0 - taylor).abs() < 1e-15);
    }
}

fn perturbed(rng: &mut ChaCha8Rng, p: &ChainParams) -> DVector<f64> {
    equilibrium(p).unwrap().map(|v| v + rng.random_range(-0.05..0.05))
}

#[test]
fn discrete_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ChainParams::default();
    let dyn_ = Rk4::new(ChainModel::new(&p), p.dt);
    let x = perturbed(&mut rng, &p);
    let u = [0.4, -0.3, 0.8];
    let (a, b) = dyn_.jacobian(x.as_slice(), &u);
    let h = 1e-6;
    for c in 0..p.nx() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[c] += h;
        xm[c] -= h;
        let fd = (dyn_.eval(xp.as_slice(), &u) - dyn_.eval(xm.as_slice(), &u)) / (2.0 * h);
        assert!((a.column(c) - &fd).amax() < 1e-6, "column {c}");
    }
    for c in 0..3 {
        let (mut up, mut um) = (u, u);
        up[c] += h;
        um[c] -= h;
        let fd = (dyn_.eval(x.as_slice(), &up) - dyn_.eval(x.as_slice(), &um)) / (2.0 * h);
        assert!((b.column(c) - &fd).amax() < 1e-6);
    }
}

#[test]
fn discrete_vjp_matches_jacobian_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = ChainParams::default();
    let dyn_ = Rk4::new(ChainModel::new(&p), p.dt);
    let x = perturbed(&mut rng, &p);
    let u = [0.1, 0.2, -0.5];
    let (a, b) = dyn_.jacobian(x.as_slice(), &u);
    let w = DVector::from_fn(p.nx(), |_, _| rng.random_range(-1.0..1.0));
    let (wx, wu) = dyn_.vjp(x.as_slice(), &u, w.as_slice());
    assert!((wx - a.tr_mul(&w)).amax() < 1e-12);
    assert!((wu - b.tr_mul(&w)).amax() < 1e-12);
}

fn energy_drift(model: &ChainModel, x0: &DVector<f64>, dt: f64, t_end: f64) -> f64 {
    let steps = (t_end / dt).round() as usize;
    let u = DVector::zeros(3);
    let e0 = model.energy(x0);
    let mut x = x0.clone();
    for _ in 0..steps {
        x = rk4_step(|x, u| model.f(x, u), &x, &u, dt);
    }
    (model.energy(&x) - e0).abs()
}

#[test]
fn energy_drift_is_fourth_order() {
    let p = ChainParams::default();
    let model = ChainModel::new(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x0 = equilibrium(&p).unwrap();
    let n = p.n_balls;
    for i in 0..3 * n {
        x0[i] += rng.random_range(-0.05..0.05);
    }
    let coarse = energy_drift(&model, &x0, 0.02, 2.0);
    let fine = energy_drift(&model, &x0, 0.01, 2.0);
    let ratio = coarse / fine;
    // global error of order 4 gives a ratio near 16
    assert!(
        ratio > 10.0 && ratio < 40.0,
        "ratio {ratio}, drifts {coarse:e} {fine:e}"
    );
}
