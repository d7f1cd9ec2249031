//! Resting configuration of the chain with the free end at its target.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::model::ChainModel;
use crate::params::ChainParams;
use crate::rk4::ContinuousModel;
use crate::ChainError;

fn state(model: &ChainModel, pos: &DVector<f64>, end: &Vector3<f64>) -> DVector<f64> {
    let n = model.n_balls;
    let mut x = DVector::zeros(model.nx());
    x.rows_mut(0, 3 * n).copy_from(pos);
    x.fixed_rows_mut::<3>(3 * n).copy_from(end);
    x
}

/// Potential energy, its gradient and Hessian in the free positions.
fn potential(model: &ChainModel, pos: &DVector<f64>, end: &Vector3<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = model.n_balls;
    let x = state(model, pos, end);
    let v = model.energy(&x);
    let forces = model.spring_forces(&x);
    let mut g = DVector::zeros(3 * n);
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        let gi = forces[i] - forces[i + 1] + Vector3::new(0.0, 0.0, model.mass * model.gravity);
        g.fixed_rows_mut::<3>(3 * i).copy_from(&gi);
    }
    for j in 0..=n {
        let k = model.force_jacobian(&(model.point(&x, j + 1) - model.point(&x, j)));
        // spring j joins free masses j-1 and j (0-based) when they exist
        let lo = (j >= 1).then(|| 3 * (j - 1));
        let hi = (j < n).then_some(3 * j);
        for r in [lo, hi].into_iter().flatten() {
            let mut blk = h.fixed_view_mut::<3, 3>(r, r);
            blk += k;
        }
        if let (Some(a), Some(b)) = (lo, hi) {
            let mut blk = h.fixed_view_mut::<3, 3>(a, b);
            blk -= k;
            let mut blk = h.fixed_view_mut::<3, 3>(b, a);
            blk -= k;
        }
    }
    (v, g, h)
}

/// Equilibrium state `x_eq` with zero velocities and `p_end` at the target.
///
/// Minimizes the potential energy with a Levenberg-damped Newton method
/// started from a sagging line between anchor and target.
pub fn equilibrium(params: &ChainParams) -> Result<DVector<f64>, ChainError> {
    params.validate()?;
    let model = ChainModel::new(params);
    let n = params.n_balls;
    let anchor = Vector3::from(params.anchor);
    let end = Vector3::from(params.target);
    let mut pos = DVector::zeros(3 * n);
    for i in 0..n {
        let t = (i + 1) as f64 / (n + 1) as f64;
        let sag = Vector3::new(0.0, 0.0, -0.1 * (std::f64::consts::PI * t).sin());
        pos.fixed_rows_mut::<3>(3 * i)
            .copy_from(&(anchor + (end - anchor) * t + sag));
    }

    let scale = params.mass * params.gravity.max(1.0) * n as f64;
    let tol = 1e-14 * scale;
    let mut mu = 1e-6;
    let (mut v, mut g, mut h) = potential(&model, &pos, &end);
    for _ in 0..500 {
        if g.norm() <= tol {
            break;
        }
        let mut damped = h.clone();
        for i in 0..3 * n {
            damped[(i, i)] += mu;
        }
        let Some(chol) = damped.cholesky() else {
            mu *= 10.0;
            continue;
        };
        let trial = &pos + chol.solve(&(-&g));
        let (vt, gt, ht) = potential(&model, &trial, &end);
        // accept ties so the last quadratic steps are not rejected by roundoff
        if vt.is_finite() && (vt < v || (vt <= v + 1e-15 * v.abs() && gt.norm() < g.norm())) {
            pos = trial;
            (v, g, h) = (vt, gt, ht);
            mu = (mu / 3.0).max(1e-12);
        } else {
            mu *= 10.0;
        }
    }
    let x = state(&model, &pos, &end);
    let residual = model.f(&x, &DVector::zeros(3)).amax();
    if !(residual <= 1e-10) {
        return Err(ChainError::Equilibrium { residual });
    }
    Ok(x)
}
