//! Continuous-time chain dynamics.
//!
//! State layout: `[p_1, …, p_n, p_end, v_1, …, v_n]` with 3-D blocks. Spring
//! `j ∈ 0..=n` joins `P_j` and `P_{j+1}`, where `P_0` is the anchor,
//! `P_i = p_i` and `P_{n+1} = p_end`:
//!
//! ```text
//! F_j  = D(1 − L/‖Δ_j‖)Δ_j,   Δ_j = P_{j+1} − P_j
//! ṗ_i  = v_i
//! v̇_i  = (F_i − F_{i−1})/m + g
//! ṗ_end = u
//! ```

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::params::ChainParams;
use crate::rk4::ContinuousModel;
use crate::ChainError;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub n_balls: usize,
    pub mass: f64,
    pub spring_constant: f64,
    pub rest_length: f64,
    pub gravity: f64,
    pub anchor: Vector3<f64>,
}

fn block(v: &DVector<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2])
}

fn add_block(v: &mut DVector<f64>, i: usize, w: &Vector3<f64>) {
    for c in 0..3 {
        v[3 * i + c] += w[c];
    }
}

impl ChainModel {
    pub fn new(p: &ChainParams) -> Self {
        Self {
            n_balls: p.n_balls,
            mass: p.mass,
            spring_constant: p.spring_constant,
            rest_length: p.rest_length,
            gravity: p.gravity,
            anchor: Vector3::from(p.anchor),
        }
    }

    pub fn nx(&self) -> usize {
        6 * self.n_balls + 3
    }

    /// `P_j` for `j ∈ 0..=n+1`.
    pub fn point(&self, x: &DVector<f64>, j: usize) -> Vector3<f64> {
        if j == 0 {
            self.anchor
        } else {
            block(x, j - 1)
        }
    }

    pub fn velocity(&self, x: &DVector<f64>, i: usize) -> Vector3<f64> {
        block(x, self.n_balls + 1 + i)
    }

    fn delta(&self, x: &DVector<f64>, j: usize) -> Vector3<f64> {
        self.point(x, j + 1) - self.point(x, j)
    }

    /// `∂F/∂Δ = D[(1 − L/d)I + (L/d³)ΔΔᵀ]`.
    pub(crate) fn force_jacobian(&self, delta: &Vector3<f64>) -> Matrix3<f64> {
        let d = delta.norm();
        let l = self.rest_length;
        (Matrix3::identity() * (1.0 - l / d) + delta * delta.transpose() * (l / (d * d * d))) * self.spring_constant
    }

    /// `δF = D[(1 − L/d)δΔ + (L/d³)(Δ·δΔ)Δ]`; the map is symmetric.
    fn force_sensitivity(&self, delta: &Vector3<f64>, dd: &Vector3<f64>) -> Vector3<f64> {
        let d = delta.norm();
        let l = self.rest_length;
        (dd * (1.0 - l / d) + delta * (l / (d * d * d) * delta.dot(dd))) * self.spring_constant
    }

    /// Spring forces `F_0 ..= F_n`.
    pub fn spring_forces(&self, x: &DVector<f64>) -> Vec<Vector3<f64>> {
        (0..=self.n_balls)
            .map(|j| {
                let delta = self.delta(x, j);
                delta * (self.spring_constant * (1.0 - self.rest_length / delta.norm()))
            })
            .collect()
    }

    /// Like [`ContinuousModel::f`] but reports coincident neighbors instead of
    /// returning NaN.
    pub fn try_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ChainError> {
        if let Some(spring) = (0..=self.n_balls).find(|&j| self.delta(x, j).norm() == 0.0) {
            return Err(ChainError::SingularSpring { spring });
        }
        Ok(self.f(x, u))
    }

    /// Kinetic, spring and gravitational energy.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let n = self.n_balls;
        let kinetic: f64 = (0..n)
            .map(|i| 0.5 * self.mass * self.velocity(x, i).norm_squared())
            .sum();
        let springs: f64 = (0..=n)
            .map(|j| 0.5 * self.spring_constant * (self.delta(x, j).norm() - self.rest_length).powi(2))
            .sum();
        let height: f64 = (1..=n).map(|j| self.mass * self.gravity * self.point(x, j)[2]).sum();
        kinetic + springs + height
    }
}

impl ContinuousModel for ChainModel {
    fn nx(&self) -> usize {
        ChainModel::nx(self)
    }

    fn nu(&self) -> usize {
        3
    }

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let n = self.n_balls;
        let mut dx = DVector::zeros(self.nx());
        let forces = self.spring_forces(x);
        let g = Vector3::new(0.0, 0.0, -self.gravity);
        for i in 0..n {
            add_block(&mut dx, i, &self.velocity(x, i));
            let acc = (forces[i + 1] - forces[i]) / self.mass + g;
            add_block(&mut dx, n + 1 + i, &acc);
        }
        add_block(&mut dx, n, &Vector3::new(u[0], u[1], u[2]));
        dx
    }

    fn jvp(&self, x: &DVector<f64>, _u: &DVector<f64>, dx: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        let n = self.n_balls;
        let mut out = DVector::zeros(self.nx());
        let dpoint = |j: usize| if j == 0 { Vector3::zeros() } else { block(dx, j - 1) };
        let df: Vec<Vector3<f64>> = (0..=n)
            .map(|j| self.force_sensitivity(&self.delta(x, j), &(dpoint(j + 1) - dpoint(j))))
            .collect();
        for i in 0..n {
            add_block(&mut out, i, &block(dx, n + 1 + i));
            add_block(&mut out, n + 1 + i, &((df[i + 1] - df[i]) / self.mass));
        }
        add_block(&mut out, n, &Vector3::new(du[0], du[1], du[2]));
        out
    }

    fn jvp_mat(&self, x: &DVector<f64>, _u: &DVector<f64>, dx: &DMatrix<f64>, du: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_balls;
        let vel = 3 * (n + 1);
        let stiff: Vec<Matrix3<f64>> = (0..=n).map(|j| self.force_jacobian(&self.delta(x, j))).collect();
        let mut out = DMatrix::zeros(self.nx(), dx.ncols());
        let mut df = vec![Vector3::zeros(); n + 1];
        for c in 0..dx.ncols() {
            let col = dx.column(c);
            let dpoint = |j: usize| {
                if j == 0 {
                    Vector3::zeros()
                } else {
                    col.fixed_rows::<3>(3 * (j - 1)).into_owned()
                }
            };
            for (j, k) in stiff.iter().enumerate() {
                df[j] = k * (dpoint(j + 1) - dpoint(j));
            }
            let mut o = out.column_mut(c);
            o.rows_mut(0, 3 * n).copy_from(&col.rows(vel, 3 * n));
            o.fixed_rows_mut::<3>(3 * n).copy_from(&du.column(c));
            for i in 0..n {
                o.fixed_rows_mut::<3>(vel + 3 * i)
                    .copy_from(&((df[i + 1] - df[i]) / self.mass));
            }
        }
        out
    }

    fn vjp(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.n_balls;
        let mut wx = DVector::zeros(self.nx());
        // ṗ_i = v_i
        for i in 0..n {
            add_block(&mut wx, n + 1 + i, &block(w, i));
        }
        let acc = |i: usize| block(w, n + 1 + i) / self.mass;
        for j in 0..=n {
            // F_j enters v̇_j with + and v̇_{j+1} with −
            let mut gj = Vector3::zeros();
            if j >= 1 {
                gj += acc(j - 1);
            }
            if j < n {
                gj -= acc(j);
            }
            let gd = self.force_sensitivity(&self.delta(x, j), &gj);
            add_block(&mut wx, j, &gd);
            if j >= 1 {
                add_block(&mut wx, j - 1, &(-gd));
            }
        }
        let we = block(w, n);
        (wx, DVector::from_column_slice(we.as_slice()))
    }
}
