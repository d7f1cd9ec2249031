//! Small reusable evaluators: linear dynamics, the stacked `(x, u)` output
//! map and quadratic tracking costs.

use nalgebra::{DMatrix, DVector};

use crate::problem::{Dynamics, InputCurvature, OutputMap, StageCost};
use crate::scalar::Real;

/// `x⁺ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearDynamics<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
}

impl<T: Real> LinearDynamics<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>) -> Self {
        assert!(a.is_square() && a.nrows() == b.nrows());
        Self { a, b }
    }

    pub fn scalar(a: T, b: T) -> Self {
        Self::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b))
    }
}

impl<T: Real> Dynamics<T> for LinearDynamics<T> {
    fn nx(&self) -> usize {
        self.a.nrows()
    }

    fn nu(&self) -> usize {
        self.b.ncols()
    }

    fn eval(&self, x: &[T], u: &[T]) -> DVector<T> {
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        &self.a * x + &self.b * u
    }

    fn jacobian(&self, _x: &[T], _u: &[T]) -> (DMatrix<T>, DMatrix<T>) {
        (self.a.clone(), self.b.clone())
    }

    fn vjp(&self, _x: &[T], _u: &[T], w: &[T]) -> (DVector<T>, DVector<T>) {
        let w = DVector::from_column_slice(w);
        (self.a.tr_mul(&w), self.b.tr_mul(&w))
    }
}

/// `h(x, u) = (x, u)`, or `h(x) = x` at the terminal stage.
///
/// Set `nu = 0` for the terminal stage.
#[derive(Debug, Clone, Copy)]
pub struct StateInputOutput {
    pub nx: usize,
    pub nu: usize,
}

impl<T: Real> OutputMap<T> for StateInputOutput {
    fn ny(&self) -> usize {
        self.nx + self.nu
    }

    fn eval(&self, x: &[T], u: Option<&[T]>) -> DVector<T> {
        let u = u.unwrap_or(&[]);
        DVector::from_iterator(self.nx + u.len(), x.iter().chain(u).copied())
    }

    fn jacobian(&self, _x: &[T], u: Option<&[T]>) -> (DMatrix<T>, Option<DMatrix<T>>) {
        let ny = self.nx + self.nu;
        let jx = DMatrix::from_fn(ny, self.nx, |i, j| if i == j { T::one() } else { T::zero() });
        let ju = u.map(|u| DMatrix::from_fn(ny, u.len(), |i, j| if i == self.nx + j { T::one() } else { T::zero() }));
        (jx, ju)
    }

    fn vjp(&self, _x: &[T], u: Option<&[T]>, w: &[T]) -> (DVector<T>, Option<DVector<T>>) {
        let gx = DVector::from_column_slice(&w[..self.nx]);
        let gu = u.map(|u| DVector::from_column_slice(&w[self.nx..self.nx + u.len()]));
        (gx, gu)
    }

    fn curvature(&self, _x: &[T], u: Option<&[T]>, lam: &DMatrix<T>) -> (DMatrix<T>, InputCurvature<T>) {
        stacked_curvature(lam, self.nx, u.map_or(0, <[T]>::len), u.is_some(), None)
    }
}

/// Curvature blocks for outputs stacked as `h = (x, u, c(x))` with `Jc = ∂c/∂x`.
pub(crate) fn stacked_curvature<T: Real>(
    lam: &DMatrix<T>,
    nx: usize,
    nu: usize,
    with_input: bool,
    jc: Option<&DMatrix<T>>,
) -> (DMatrix<T>, InputCurvature<T>) {
    let mut q = lam.view((0, 0), (nx, nx)).into_owned();
    let mut s = lam.view((nx, 0), (nu, nx)).into_owned();
    if let Some(jc) = jc {
        let nz = jc.nrows();
        let zo = nx + nu;
        let lzx = lam.view((zo, 0), (nz, nx));
        let cross = jc.tr_mul(&lzx);
        q += &cross + cross.transpose();
        q += jc.tr_mul(&(lam.view((zo, zo), (nz, nz)) * jc));
        s += lam.view((nx, zo), (nu, nz)) * jc;
    }
    let q = (&q + q.transpose()) * T::lit(0.5);
    let input = with_input.then(|| (s, lam.view((nx, nx), (nu, nu)).into_owned()));
    (q, input)
}

/// `ℓ(y) = ½(y − y_r)ᵀ W (y − y_r)` with `W` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticCost<T: Real> {
    pub weight: DMatrix<T>,
    pub reference: DVector<T>,
}

impl<T: Real> QuadraticCost<T> {
    pub fn new(weight: DMatrix<T>, reference: DVector<T>) -> Self {
        assert!(weight.is_square() && weight.nrows() == reference.len());
        Self { weight, reference }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DVector::zeros(n))
    }

    fn offset(&self, y: &[T]) -> DVector<T> {
        DVector::from_column_slice(y) - &self.reference
    }
}

impl<T: Real> StageCost<T> for QuadraticCost<T> {
    fn ny(&self) -> usize {
        self.reference.len()
    }

    fn eval(&self, y: &[T]) -> T {
        let d = self.offset(y);
        T::lit(0.5) * d.dot(&(&self.weight * &d))
    }

    fn grad(&self, y: &[T]) -> DVector<T> {
        &self.weight * self.offset(y)
    }

    fn hess(&self, _y: &[T]) -> DMatrix<T> {
        self.weight.clone()
    }
}
