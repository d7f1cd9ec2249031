use chain_bench::{equilibrium, ChainModel, ChainParams, ContinuousModel, Rk4};
use nalgebra::DVector;
use panoc_gn::Dynamics;

/// Damped explicit dynamics run until the chain stops moving.
fn relax(p: &ChainParams) -> DVector<f64> {
    let model = ChainModel::new(p);
    let n = p.n_balls;
    let mut x = DVector::zeros(p.nx());
    for i in 0..n {
        let t = (i + 1) as f64 / (n + 1) as f64;
        for c in 0..3 {
            x[3 * i + c] = p.anchor[c] + t * (p.target[c] - p.anchor[c]);
        }
    }
    for c in 0..3 {
        x[3 * n + c] = p.target[c];
    }
    let damping = 3.0;
    let h = 2e-3;
    let zero = DVector::zeros(3);
    for _ in 0..400_000 {
        let f = model.f(&x, &zero);
        for i in 3 * (n + 1)..p.nx() {
            let v = x[i] + h * (f[i] - damping * x[i]);
            x[i] = v;
        }
        for i in 0..3 * n {
            x[i] += h * x[3 * (n + 1) + i];
        }
    }
    x
}

#[test]
fn matches_dynamic_relaxation() {
    let p = ChainParams::default();
    let x_eq = equilibrium(&p).unwrap();
    let relaxed = relax(&p);
    let n = p.n_balls;
    let diff = (x_eq.rows(0, 3 * n) - relaxed.rows(0, 3 * n)).amax();
    assert!(diff < 1e-7, "{diff:e}");
}

#[test]
fn is_fixed_point_of_discrete_dynamics() {
    let p = ChainParams::default();
    let x_eq = equilibrium(&p).unwrap();
    let dyn_ = Rk4::new(ChainModel::new(&p), p.dt);
    let next = dyn_.eval(x_eq.as_slice(), &[0.0; 3]);
    assert!((next - &x_eq).amax() <= 1e-10);
    let n = p.n_balls;
    assert_eq!(x_eq.rows(3 * n, 3).as_slice(), &p.target);
    assert!(x_eq.rows(3 * (n + 1), 3 * n).iter().all(|&v| v == 0.0));
}

#[test]
fn translation_consistency() {
    let p = ChainParams::default();
    let shift = [0.3, -1.2, 0.7];
    let moved = ChainParams {
        anchor: [shift[0], shift[1], shift[2]],
        target: [p.target[0] + shift[0], p.target[1] + shift[1], p.target[2] + shift[2]],
        ..p.clone()
    };
    let a = equilibrium(&p).unwrap();
    let b = equilibrium(&moved).unwrap();
    for i in 0..3 * (p.n_balls + 1) {
        assert!((b[i] - a[i] - shift[i % 3]).abs() < 1e-10);
    }
}

#[test]
fn other_chain_lengths() {
    for n_balls in [1, 3, 10] {
        let p = ChainParams {
            n_balls,
            ..Default::default()
        };
        let x = equilibrium(&p).unwrap();
        assert_eq!(x.len(), 6 * n_balls + 3);
        let model = ChainModel::new(&p);
        assert!(model.f(&x, &DVector::zeros(3)).amax() < 1e-10);
    }
}
