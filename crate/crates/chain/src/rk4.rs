//! Classical Runge-Kutta discretization with exact derivatives.

use nalgebra::{DMatrix, DVector};
use panoc_gn::Dynamics;

/// `ẋ = f(x, u)` with forward and reverse directional derivatives.
pub trait ContinuousModel: Send + Sync {
    fn nx(&self) -> usize;
    fn nu(&self) -> usize;
    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `∂f/∂x·dx + ∂f/∂u·du`.
    fn jvp(&self, x: &DVector<f64>, u: &DVector<f64>, dx: &DVector<f64>, du: &DVector<f64>) -> DVector<f64>;
    /// `((∂f/∂x)ᵀw, (∂f/∂u)ᵀw)`.
    fn vjp(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>);

    /// [`jvp`](Self::jvp) applied to every column of the seed matrices.
    fn jvp_mat(&self, x: &DVector<f64>, u: &DVector<f64>, dx: &DMatrix<f64>, du: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nx(), dx.ncols());
        for c in 0..dx.ncols() {
            let col = self.jvp(x, u, &dx.column(c).into_owned(), &du.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }
}

/// One RK4 step of `ẋ = f(x, u)` with `u` held constant.
pub fn rk4_step<F>(f: F, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (dt / 2.0)), u);
    let k3 = f(&(x + &k2 * (dt / 2.0)), u);
    let k4 = f(&(x + &k3 * dt), u);
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// Discrete dynamics `x⁺ = RK4(f, x, u, Δt)`.
#[derive(Debug, Clone)]
pub struct Rk4<M> {
    pub model: M,
    pub dt: f64,
}

impl<M: ContinuousModel> Rk4<M> {
    pub fn new(model: M, dt: f64) -> Self {
        Self { model, dt }
    }

    /// Stage points `x, x + h/2·k₁, x + h/2·k₂, x + h·k₃`.
    fn stage_points(&self, x: &DVector<f64>, u: &DVector<f64>) -> [DVector<f64>; 4] {
        let h = self.dt;
        let k1 = self.model.f(x, u);
        let x2 = x + &k1 * (h / 2.0);
        let k2 = self.model.f(&x2, u);
        let x3 = x + &k2 * (h / 2.0);
        let k3 = self.model.f(&x3, u);
        let x4 = x + &k3 * h;
        [x.clone(), x2, x3, x4]
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        rk4_step(|x, u| self.model.f(x, u), x, u, self.dt)
    }

    /// Tangent of the discrete map along `(dx, du)`.
    pub fn jvp(&self, x: &DVector<f64>, u: &DVector<f64>, dx: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        let pts = self.stage_points(x, u);
        self.jvp_at(&pts, u, dx, du)
    }

    fn jvp_at(&self, pts: &[DVector<f64>; 4], u: &DVector<f64>, dx: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        let h = self.dt;
        let m = &self.model;
        let d1 = m.jvp(&pts[0], u, dx, du);
        let d2 = m.jvp(&pts[1], u, &(dx + &d1 * (h / 2.0)), du);
        let d3 = m.jvp(&pts[2], u, &(dx + &d2 * (h / 2.0)), du);
        let d4 = m.jvp(&pts[3], u, &(dx + &d3 * h), du);
        dx + (d1 + (d2 + d3) * 2.0 + d4) * (h / 6.0)
    }
}

impl<M: ContinuousModel> Dynamics<f64> for Rk4<M> {
    fn nx(&self) -> usize {
        self.model.nx()
    }

    fn nu(&self) -> usize {
        self.model.nu()
    }

    fn eval(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        self.step(&DVector::from_column_slice(x), &DVector::from_column_slice(u))
    }

    fn jacobian(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (nx, nu) = (self.model.nx(), self.model.nu());
        let h = self.dt;
        let m = &self.model;
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        let pts = self.stage_points(&x, &u);
        // seeds [I 0] and [0 I] give [A B] in one sweep
        let mut sx = DMatrix::zeros(nx, nx + nu);
        sx.view_mut((0, 0), (nx, nx)).fill_with_identity();
        let mut su = DMatrix::zeros(nu, nx + nu);
        su.view_mut((0, nx), (nu, nu)).fill_with_identity();
        let d1 = m.jvp_mat(&pts[0], &u, &sx, &su);
        let d2 = m.jvp_mat(&pts[1], &u, &(&sx + &d1 * (h / 2.0)), &su);
        let d3 = m.jvp_mat(&pts[2], &u, &(&sx + &d2 * (h / 2.0)), &su);
        let d4 = m.jvp_mat(&pts[3], &u, &(&sx + &d3 * h), &su);
        let ab = sx + (d1 + (d2 + d3) * 2.0 + d4) * (h / 6.0);
        (ab.columns(0, nx).into_owned(), ab.columns(nx, nu).into_owned())
    }

    fn vjp(&self, x: &[f64], u: &[f64], w: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let h = self.dt;
        let m = &self.model;
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        let w = DVector::from_column_slice(w);
        let pts = self.stage_points(&x, &u);
        let mut xb = w.clone();
        let mut ub = DVector::zeros(m.nu());
        let mut kb3 = &w * (h / 3.0);
        let mut kb2 = &w * (h / 3.0);
        let mut kb1 = &w * (h / 6.0);

        let (gx, gu) = m.vjp(&pts[3], &u, &(&w * (h / 6.0)));
        xb += &gx;
        kb3 += &gx * h;
        ub += gu;
        let (gx, gu) = m.vjp(&pts[2], &u, &kb3);
        xb += &gx;
        kb2 += &gx * (h / 2.0);
        ub += gu;
        let (gx, gu) = m.vjp(&pts[1], &u, &kb2);
        xb += &gx;
        kb1 += &gx * (h / 2.0);
        ub += gu;
        let (gx, gu) = m.vjp(&pts[0], &u, &kb1);
        xb += gx;
        ub += gu;
        (xb, ub)
    }
}
