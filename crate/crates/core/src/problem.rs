//! Optimal control problem definition.
//!
//! A problem is a bundle of evaluators: discrete-time dynamics `f`, per-stage
//! output maps `h_k`, convex per-stage costs `ℓ_k` and a box on the inputs.
//! The cost of an input sequence is `Σ_k ℓ_k(h_k(x^k, u^k)) + ℓ_N(h_N(x^N))`
//! with the states eliminated by simulation.
//!
//! Evaluators must be deterministic and re-entrant; [`Ocp`] is immutable once
//! built and can be shared between threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Discrete-time dynamics `x⁺ = f(x, u)`.
pub trait Dynamics<T: Real>: Send + Sync {
    fn nx(&self) -> usize;
    fn nu(&self) -> usize;

    fn eval(&self, x: &[T], u: &[T]) -> DVector<T>;

    /// Returns `(∂f/∂x, ∂f/∂u)`.
    fn jacobian(&self, x: &[T], u: &[T]) -> (DMatrix<T>, DMatrix<T>);

    /// Returns `((∂f/∂x)ᵀw, (∂f/∂u)ᵀw)`.
    ///
    /// The default forms both Jacobians; models with cheap adjoints should
    /// override it, since the gradient path calls this once per stage.
    fn vjp(&self, x: &[T], u: &[T], w: &[T]) -> (DVector<T>, DVector<T>) {
        let (a, b) = self.jacobian(x, u);
        let w = DVector::from_column_slice(w);
        (a.tr_mul(&w), b.tr_mul(&w))
    }
}

/// `(S, R)` blocks of a stage curvature; `None` at the terminal stage.
pub type InputCurvature<T> = Option<(DMatrix<T>, DMatrix<T>)>;

/// Output map `y = h_k(x, u)`, or `y = h_N(x)` at the terminal stage (`u = None`).
pub trait OutputMap<T: Real>: Send + Sync {
    fn ny(&self) -> usize;

    fn eval(&self, x: &[T], u: Option<&[T]>) -> DVector<T>;

    /// Returns `(∂h/∂x, ∂h/∂u)`; the second entry is `None` iff `u` is.
    fn jacobian(&self, x: &[T], u: Option<&[T]>) -> (DMatrix<T>, Option<DMatrix<T>>);

    /// Returns `((∂h/∂x)ᵀw, (∂h/∂u)ᵀw)`.
    fn vjp(&self, x: &[T], u: Option<&[T]>, w: &[T]) -> (DVector<T>, Option<DVector<T>>) {
        let (jx, ju) = self.jacobian(x, u);
        let w = DVector::from_column_slice(w);
        (jx.tr_mul(&w), ju.map(|ju| ju.tr_mul(&w)))
    }

    /// Returns `JxᵀΛJx` and, when `u` is given, `(JuᵀΛJx, JuᵀΛJu)`.
    fn curvature(&self, x: &[T], u: Option<&[T]>, lam: &DMatrix<T>) -> (DMatrix<T>, InputCurvature<T>) {
        let (jx, ju) = self.jacobian(x, u);
        let lam_jx = lam * &jx;
        let q = jx.tr_mul(&lam_jx);
        (q, ju.map(|ju| (ju.tr_mul(&lam_jx), ju.tr_mul(&(lam * &ju)))))
    }
}

/// Convex stage cost `ℓ(y)` with gradient and a generalized Hessian selection.
pub trait StageCost<T: Real>: Send + Sync {
    fn ny(&self) -> usize;
    fn eval(&self, y: &[T]) -> T;
    fn grad(&self, y: &[T]) -> DVector<T>;
    /// An element of the generalized Hessian `∂²ℓ(y)`: symmetric positive semidefinite.
    fn hess(&self, y: &[T]) -> DMatrix<T>;
}

/// Output map and cost of one stage.
pub struct Stage<T: Real> {
    pub output: Arc<dyn OutputMap<T>>,
    pub cost: Arc<dyn StageCost<T>>,
}

impl<T: Real> Clone for Stage<T> {
    fn clone(&self) -> Self {
        Self {
            output: Arc::clone(&self.output),
            cost: Arc::clone(&self.cost),
        }
    }
}

impl<T: Real> Stage<T> {
    pub fn new(output: Arc<dyn OutputMap<T>>, cost: Arc<dyn StageCost<T>>) -> Self {
        Self { output, cost }
    }
}

#[derive(Clone)]
enum Stages<T: Real> {
    Uniform(Stage<T>),
    Varying(Vec<Stage<T>>),
}

/// Closed box `{v : lb ≤ v ≤ ub}`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<T: Real> {
    pub lb: DVector<T>,
    pub ub: DVector<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lb: DVector<T>, ub: DVector<T>) -> Self {
        assert_eq!(lb.len(), ub.len(), "bound vectors differ in length");
        Self { lb, ub }
    }

    /// `[lo, hi]ⁿ`.
    pub fn uniform(n: usize, lo: T, hi: T) -> Self {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn unbounded(n: usize) -> Self {
        let inf = T::lit(f64::INFINITY);
        Self::uniform(n, -inf, inf)
    }

    pub fn len(&self) -> usize {
        self.lb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lb.is_empty()
    }

    /// Concatenates `times` copies of this box.
    pub fn repeat(&self, times: usize) -> Self {
        let n = self.len();
        let lb = DVector::from_fn(n * times, |i, _| self.lb[i % n]);
        let ub = DVector::from_fn(n * times, |i, _| self.ub[i % n]);
        Self { lb, ub }
    }

    /// Indices with `lb_i > ub_i` (or a NaN bound).
    pub fn violations(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !(self.lb[i] <= self.ub[i])).collect()
    }

    #[inline]
    pub fn clamp(&self, i: usize, v: T) -> T {
        let lo = self.lb[i];
        let hi = self.ub[i];
        if v < lo {
            lo
        } else if v > hi {
            hi
        } else {
            v
        }
    }

    /// Whether `v` lies strictly inside `(lb_i, ub_i)`.
    #[inline]
    pub fn in_interior(&self, i: usize, v: T) -> bool {
        self.lb[i] < v && v < self.ub[i]
    }

    pub fn contains(&self, v: &DVector<T>) -> bool {
        v.len() == self.len() && (0..self.len()).all(|i| self.lb[i] <= v[i] && v[i] <= self.ub[i])
    }
}

/// Finite-horizon optimal control problem in single-shooting form.
#[derive(Clone)]
pub struct Ocp<T: Real> {
    horizon: usize,
    x_init: DVector<T>,
    dynamics: Arc<dyn Dynamics<T>>,
    stages: Stages<T>,
    terminal: Stage<T>,
    bounds: Bounds<T>,
}

impl<T: Real> fmt::Debug for Ocp<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ocp")
            .field("horizon", &self.horizon)
            .field("nx", &self.nx())
            .field("nu", &self.nu())
            .finish_non_exhaustive()
    }
}

impl<T: Real> Ocp<T> {
    /// Problem where every stage `k < N` shares one output map and cost.
    ///
    /// `input_bounds` is either the per-stage box (length `n_u`) or the full
    /// horizon box (length `N·n_u`).
    pub fn uniform(
        horizon: usize,
        x_init: DVector<T>,
        dynamics: Arc<dyn Dynamics<T>>,
        stage: Stage<T>,
        terminal: Stage<T>,
        input_bounds: Bounds<T>,
    ) -> Self {
        let bounds = Self::horizon_bounds(horizon, dynamics.nu(), input_bounds);
        Self {
            horizon,
            x_init,
            dynamics,
            stages: Stages::Uniform(stage),
            terminal,
            bounds,
        }
    }

    /// Problem with one `Stage` per time step `k = 0..N-1`.
    pub fn time_varying(
        x_init: DVector<T>,
        dynamics: Arc<dyn Dynamics<T>>,
        stages: Vec<Stage<T>>,
        terminal: Stage<T>,
        input_bounds: Bounds<T>,
    ) -> Self {
        let horizon = stages.len();
        let bounds = Self::horizon_bounds(horizon, dynamics.nu(), input_bounds);
        Self {
            horizon,
            x_init,
            dynamics,
            stages: Stages::Varying(stages),
            terminal,
            bounds,
        }
    }

    fn horizon_bounds(horizon: usize, nu: usize, b: Bounds<T>) -> Bounds<T> {
        if b.len() == nu && horizon != 1 {
            b.repeat(horizon)
        } else {
            assert_eq!(b.len(), nu * horizon, "input bounds must have length n_u or N·n_u");
            b
        }
    }

    /// Same problem with a different initial state.
    pub fn with_x_init(&self, x_init: DVector<T>) -> Self {
        Self { x_init, ..self.clone() }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nx(&self) -> usize {
        self.dynamics.nx()
    }

    pub fn nu(&self) -> usize {
        self.dynamics.nu()
    }

    /// Number of decision variables `N·n_u`.
    pub fn n_inputs(&self) -> usize {
        self.horizon * self.nu()
    }

    pub fn x_init(&self) -> &DVector<T> {
        &self.x_init
    }

    pub fn dynamics(&self) -> &dyn Dynamics<T> {
        self.dynamics.as_ref()
    }

    /// Stage `k ≤ N`; `k = N` is the terminal stage.
    pub fn stage(&self, k: usize) -> &Stage<T> {
        assert!(k <= self.horizon, "stage index out of range");
        if k == self.horizon {
            return &self.terminal;
        }
        match &self.stages {
            Stages::Uniform(s) => s,
            Stages::Varying(v) => &v[k],
        }
    }

    pub fn ny(&self, k: usize) -> usize {
        self.stage(k).output.ny()
    }

    /// Input box over the full horizon (length `N·n_u`, stage-major).
    pub fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }

    /// Stage `k` slice of a stage-major horizon vector.
    #[inline]
    pub fn input_slice<'a>(&self, u: &'a DVector<T>, k: usize) -> &'a [T] {
        let nu = self.nu();
        &u.as_slice()[k * nu..(k + 1) * nu]
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    Dimension {
        evaluator: String,
        stage: Option<usize>,
        expected: String,
        found: String,
    },
    BoundViolation {
        index: usize,
    },
    InitialState {
        expected: usize,
        found: usize,
    },
    NotSymmetric {
        stage: usize,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Dimension {
                evaluator,
                stage,
                expected,
                found,
            } => {
                write!(f, "{evaluator}")?;
                if let Some(k) = stage {
                    write!(f, " (stage {k})")?;
                }
                write!(f, ": expected {expected}, found {found}")
            }
            Issue::BoundViolation { index } => write!(f, "input bound {index}: lb > ub"),
            Issue::InitialState { expected, found } => {
                write!(f, "x_init: expected length {expected}, found {found}")
            }
            Issue::NotSymmetric { stage } => write!(f, "cost Hessian (stage {stage}) not symmetric"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "OK");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn dims(m: &DMatrix<impl Real>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// Checks evaluator output sizes at a sample point and the input box.
///
/// The sample point is `x_init` propagated with the projection of `u = 0`
/// onto the input box.
pub fn validate<T: Real>(ocp: &Ocp<T>) -> ValidationReport {
    let mut issues = Vec::new();
    let nx = ocp.nx();
    let nu = ocp.nu();
    let n = ocp.horizon();

    for index in ocp.bounds().violations() {
        issues.push(Issue::BoundViolation { index });
    }
    if ocp.x_init().len() != nx {
        issues.push(Issue::InitialState {
            expected: nx,
            found: ocp.x_init().len(),
        });
        return ValidationReport { issues };
    }

    let mut dim = |evaluator: &str, stage: Option<usize>, expected: String, found: String| {
        if expected != found {
            issues.push(Issue::Dimension {
                evaluator: evaluator.to_string(),
                stage,
                expected,
                found,
            });
        }
    };

    let b = ocp.bounds();
    let mut x = ocp.x_init().clone();
    let mut nonsym = Vec::new();
    for k in 0..=n {
        let stage = ocp.stage(k);
        let u_k: Option<Vec<T>> = (k < n).then(|| {
            (0..nu)
                .map(|i| {
                    let j = k * nu + i;
                    if j < b.len() {
                        b.clamp(j, T::zero())
                    } else {
                        T::zero()
                    }
                })
                .collect()
        });
        let ny = stage.output.ny();
        let y = stage.output.eval(x.as_slice(), u_k.as_deref());
        dim("h", Some(k), ny.to_string(), y.len().to_string());
        let (jx, ju) = stage.output.jacobian(x.as_slice(), u_k.as_deref());
        dim("∂h/∂x", Some(k), format!("{ny}x{nx}"), dims(&jx));
        if let Some(ju) = &ju {
            dim("∂h/∂u", Some(k), format!("{ny}x{nu}"), dims(ju));
        }
        dim("ℓ", Some(k), ny.to_string(), stage.cost.ny().to_string());
        if y.len() == stage.cost.ny() {
            let g = stage.cost.grad(y.as_slice());
            dim("∇ℓ", Some(k), ny.to_string(), g.len().to_string());
            let h = stage.cost.hess(y.as_slice());
            dim("∂²ℓ", Some(k), format!("{ny}x{ny}"), dims(&h));
            if h.is_square() && (&h - h.transpose()).amax() > T::lit(1e-10) * (T::one() + h.amax()) {
                nonsym.push(k);
            }
        }
        if let Some(u_k) = &u_k {
            let xn = ocp.dynamics().eval(x.as_slice(), u_k);
            dim("f", Some(k), nx.to_string(), xn.len().to_string());
            let (a, bm) = ocp.dynamics().jacobian(x.as_slice(), u_k);
            dim("∂f/∂x", Some(k), format!("{nx}x{nx}"), dims(&a));
            dim("∂f/∂u", Some(k), format!("{nx}x{nu}"), dims(&bm));
            if xn.len() != nx {
                break;
            }
            x = xn;
        }
    }
    issues.extend(nonsym.into_iter().map(|stage| Issue::NotSymmetric { stage }));
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearDynamics, QuadraticCost, StateInputOutput};

    fn scalar_problem(extra_state: usize) -> Ocp<f64> {
        struct Broken(usize);
        impl Dynamics<f64> for Broken {
            fn nx(&self) -> usize {
                1
            }
            fn nu(&self) -> usize {
                1
            }
            fn eval(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
                DVector::from_element(1 + self.0, x[0] + u[0])
            }
            fn jacobian(&self, _: &[f64], _: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
                (DMatrix::identity(1, 1), DMatrix::identity(1, 1))
            }
        }
        let out = Arc::new(StateInputOutput { nx: 1, nu: 1 });
        let term = Arc::new(StateInputOutput { nx: 1, nu: 0 });
        Ocp::uniform(
            3,
            DVector::from_element(1, 0.5),
            Arc::new(Broken(extra_state)),
            Stage::new(out, Arc::new(QuadraticCost::identity(2))),
            Stage::new(term, Arc::new(QuadraticCost::identity(1))),
            Bounds::uniform(1, -1.0, 1.0),
        )
    }

    #[test]
    fn well_formed_problem_passes() {
        let ocp = scalar_problem(0);
        let report = validate(&ocp);
        assert!(report.is_ok(), "{report}");
        assert_eq!(report.to_string(), "OK");
    }

    #[test]
    fn oversized_dynamics_output_is_reported() {
        let report = validate(&scalar_problem(1));
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::Dimension { evaluator, .. } if evaluator == "f")));
    }

    #[test]
    fn inverted_bound_is_reported() {
        let dynamics = Arc::new(LinearDynamics::scalar(1.0, 1.0));
        let out = Arc::new(StateInputOutput { nx: 1, nu: 1 });
        let term = Arc::new(StateInputOutput { nx: 1, nu: 0 });
        let ocp = Ocp::uniform(
            2,
            DVector::from_element(1, 0.0),
            dynamics,
            Stage::new(out, Arc::new(QuadraticCost::identity(2))),
            Stage::new(term, Arc::new(QuadraticCost::identity(1))),
            Bounds::new(DVector::from_vec(vec![2.0, -1.0]), DVector::from_vec(vec![1.0, 1.0])),
        );
        let report = validate(&ocp);
        assert_eq!(report.issues, vec![Issue::BoundViolation { index: 0 }]);
    }

    #[test]
    fn bounds_repeat_is_stage_major() {
        let b = Bounds::new(DVector::from_vec(vec![-1.0, -2.0]), DVector::from_vec(vec![1.0, 2.0]));
        let r = b.repeat(3);
        assert_eq!(r.lb.as_slice(), &[-1.0, -2.0, -1.0, -2.0, -1.0, -2.0]);
        assert!(r.in_interior(3, 1.9));
        assert!(!r.in_interior(3, 2.0));
    }
}
