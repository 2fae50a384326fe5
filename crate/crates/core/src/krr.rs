//! Gaussian kernel ridge regression with two regularizers:
//!
//! * classic: `(1/n) Σ (f(x_i) − y_i)² + λ ‖f‖²_σ`, solved in closed form;
//! * product: `(1/n) Σ (f(x_i) − y_i)² + λ ‖f²‖_{σ/√2}`, where
//!   `‖f²‖²_{σ/√2} = trace((D K̃)⁴)`; nonconvex, solved iteratively.
//!
//! Both use the representer ansatz `f = Σ_i a_i k_σ(x_i, ·)` over the
//! training inputs.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ensure_points, GaussianKernel, Point};
use crate::linalg::{pivoted_cholesky, scale_rows, SymmetricSolver};
use crate::mmd::WeightedSample;
use crate::rkhs::{fourth_power_trace, fourth_power_trace_gradient, RkhsFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionProblem {
    train_x: Vec<Point>,
    train_y: Vec<f64>,
    kernel: GaussianKernel,
}

impl RegressionProblem {
    pub fn new(train_x: Vec<Point>, train_y: Vec<f64>, kernel: GaussianKernel) -> Result<Self> {
        ensure_points(&train_x)?;
        if train_x.len() != train_y.len() {
            return Err(Error::DimensionMismatch {
                expected: train_x.len(),
                found: train_y.len(),
            });
        }
        if train_y.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("train_y", "labels must be finite"));
        }
        Ok(Self {
            train_x,
            train_y,
            kernel,
        })
    }

    pub fn train_x(&self) -> &[Point] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    fn gram(&self) -> DMatrix<f64> {
        self.kernel
            .matrix(&self.train_x)
            .expect("validated")
            .into_entries()
    }

    fn labels(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.train_y)
    }

    fn model(&self, coefficients: Vec<f64>) -> Result<RkhsFunction> {
        RkhsFunction::new(self.train_x.clone(), coefficients, self.kernel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegularizerKind {
    /// `λ ‖f‖²_σ`
    #[serde(rename = "classic")]
    ClassicSqNorm,
    /// `λ ‖f²‖_{σ/√2}`
    #[serde(rename = "product")]
    ProductNorm,
}

impl RegularizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegularizerKind::ClassicSqNorm => "classic",
            RegularizerKind::ProductNorm => "product",
        }
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(RegularizerKind::ClassicSqNorm),
            "product" => Ok(RegularizerKind::ProductNorm),
            other => Err(Error::invalid(
                "regularizer",
                format!("expected `classic` or `product`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub model: RkhsFunction,
    pub regularizer_kind: RegularizerKind,
    pub lambda: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Optimizer used by [`fit_product_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Full-batch gradient descent on all `n` coefficients with Armijo backtracking.
    GradientDescent,
    /// Damped Newton on the coefficients of a pivoted-Cholesky anchor subset,
    /// in coordinates where `‖f‖_σ` is the Euclidean norm. Unused anchors keep
    /// coefficient zero.
    ReducedNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub solver: Solver,
    /// Stop once the coefficient gradient has ∞-norm at most this.
    pub tol: f64,
    pub max_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    /// Added under the square root of the penalty to keep it differentiable at `a = 0`.
    pub floor: f64,
    /// Residual-diagonal threshold of the pivoted Cholesky used by `ReducedNewton`.
    pub pivot_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            solver: Solver::GradientDescent,
            tol: 1e-7,
            max_iters: 10_000,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            floor: 1e-12,
            pivot_tol: 1e-12,
        }
    }
}

impl FitOptions {
    pub fn newton() -> Self {
        Self {
            solver: Solver::ReducedNewton,
            max_iters: 500,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.tol >= 0.0
            && self.initial_step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.floor >= 0.0
            && self.pivot_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("options", format!("{self:?}")))
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "lambda",
            format!("must be finite and >= 0, got {lambda}"),
        ))
    }
}

/// Mean squared residual of `K a` against `y`.
fn data_term(k: &DMatrix<f64>, a: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (k * a - y).norm_squared() / y.len() as f64
}

/// `(1/n) ‖K a − y‖² + λ aᵀ K a`.
pub fn classic_objective(problem: &RegressionProblem, coefficients: &[f64], lambda: f64) -> f64 {
    let k = problem.gram();
    let a = DVector::from_column_slice(coefficients);
    data_term(&k, &a, &problem.labels()) + lambda * a.dot(&(&k * &a))
}

/// `(1/n) ‖K a − y‖² + λ √(trace((D K̃)⁴) + floor)`.
pub fn product_objective(
    problem: &RegressionProblem,
    coefficients: &[f64],
    lambda: f64,
    floor: f64,
) -> f64 {
    let k = problem.gram();
    let wide = problem
        .kernel
        .widened()
        .matrix(&problem.train_x)
        .expect("validated")
        .into_entries();
    let a = DVector::from_column_slice(coefficients);
    data_term(&k, &a, &problem.labels()) + lambda * (fourth_power_trace(&a, &wide) + floor).sqrt()
}

/// Closed-form ridge: `(K + nλI) a = y`.
pub fn fit_classic(problem: &RegressionProblem, lambda: f64) -> Result<FitReport> {
    check_lambda(lambda)?;
    let n = problem.len();
    let k = problem.gram();
    let mut system = k.clone();
    for i in 0..n {
        system[(i, i)] += n as f64 * lambda;
    }
    let y = problem.labels();
    let a = SymmetricSolver::new(&system)?.solve(&y);
    let objective = data_term(&k, &a, &y) + lambda * a.dot(&(&k * &a));
    if !objective.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite objective {objective}"
        )));
    }
    Ok(FitReport {
        model: problem.model(a.as_slice().to_vec())?,
        regularizer_kind: RegularizerKind::ClassicSqNorm,
        lambda,
        final_objective: objective,
        iterations: 1,
        converged: true,
    })
}

/// Minimizes the product-norm objective, warm-started from the classic ridge
/// solution at the same `λ`.
pub fn fit_product_norm(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FitReport> {
    check_lambda(lambda)?;
    opts.validate()?;
    let run = match opts.solver {
        Solver::GradientDescent => descend(problem, lambda, opts, &mut |_| {})?,
        Solver::ReducedNewton => reduced_newton(problem, lambda, opts)?,
    };
    Ok(FitReport {
        model: problem.model(run.coefficients)?,
        regularizer_kind: RegularizerKind::ProductNorm,
        lambda,
        final_objective: run.objective,
        iterations: run.iterations,
        converged: run.converged,
    })
}

/// Gradient-descent variant that reports every accepted objective value,
/// starting with the initial one.
pub fn fit_product_norm_traced(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &FitOptions,
    start: Option<&[f64]>,
) -> Result<(FitReport, Vec<f64>)> {
    check_lambda(lambda)?;
    opts.validate()?;
    let mut trace = Vec::new();
    let run = match start {
        Some(a0) => {
            if a0.len() != problem.len() {
                return Err(Error::DimensionMismatch {
                    expected: problem.len(),
                    found: a0.len(),
                });
            }
            descend_from(
                problem,
                lambda,
                opts,
                DVector::from_column_slice(a0),
                &mut |j| trace.push(j),
            )?
        }
        None => descend(problem, lambda, opts, &mut |j| trace.push(j))?,
    };
    let report = FitReport {
        model: problem.model(run.coefficients)?,
        regularizer_kind: RegularizerKind::ProductNorm,
        lambda,
        final_objective: run.objective,
        iterations: run.iterations,
        converged: run.converged,
    };
    Ok((report, trace))
}

struct Run {
    coefficients: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn descend(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &FitOptions,
    on_accept: &mut dyn FnMut(f64),
) -> Result<Run> {
    let start = fit_classic(problem, lambda)?.model.coefficient_vector();
    descend_from(problem, lambda, opts, start, on_accept)
}

fn descend_from(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &FitOptions,
    start: DVector<f64>,
    on_accept: &mut dyn FnMut(f64),
) -> Result<Run> {
    let n = problem.len() as f64;
    let k = problem.gram();
    let wide = problem
        .kernel
        .widened()
        .matrix(&problem.train_x)?
        .into_entries();
    let y = problem.labels();

    let objective = |a: &DVector<f64>| {
        data_term(&k, a, &y) + lambda * (fourth_power_trace(a, &wide) + opts.floor).sqrt()
    };
    let gradient = |a: &DVector<f64>| {
        let residual = &k * a - &y;
        let mut g = &k * residual * (2.0 / n);
        if lambda > 0.0 {
            let root = (fourth_power_trace(a, &wide) + opts.floor).sqrt();
            g += fourth_power_trace_gradient(a, &wide) * (lambda / (2.0 * root));
        }
        g
    };

    let mut a = start;
    let mut j = objective(&a);
    if !j.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite initial objective {j}"
        )));
    }
    on_accept(j);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let g = gradient(&a);
        if g.amax() <= opts.tol {
            converged = true;
            break;
        }
        let g2 = g.norm_squared();
        let mut step = opts.initial_step;
        let accepted = loop {
            let candidate = &a - &g * step;
            let jc = objective(&candidate);
            if !jc.is_finite() && !jc.is_nan() {
                return Err(Error::Numerical(format!("objective diverged to {jc}")));
            }
            if jc <= j - opts.armijo * step * g2 {
                break Some((candidate, jc));
            }
            step *= opts.shrink;
            if step < 1e-30 {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((next, jn)) => {
                a = next;
                j = jn;
                on_accept(j);
            }
            None => break,
        }
    }
    if !j.is_finite() {
        return Err(Error::Numerical(format!("non-finite objective {j}")));
    }
    Ok(Run {
        coefficients: a.as_slice().to_vec(),
        objective: j,
        iterations,
        converged,
    })
}

/// Restricted problem over pivot anchors in whitened coordinates `c = Rᵀ a_P`,
/// where `K_PP = R Rᵀ`, so `‖f‖_σ = ‖c‖`. Predictions at the training points
/// are `L c`.
///
/// The penalty is evaluated through the feature form `‖f²‖² = ‖A²‖²_F` with
/// `A = Σ_j c_j B_j`, where `B_j = Σ_i (R^{-T})_ij z_i z_iᵀ` and `z_iᵀz_k` =
/// `k_{√2σ}(x_i, x_k)`. Each `B_j` has unit Frobenius norm; evaluating the
/// trace in raw coefficients instead loses everything to cancellation once
/// `a_P` grows large.
struct Reduced {
    pivots: Vec<usize>,
    factor: DMatrix<f64>,
    root: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
    labels: DVector<f64>,
    lambda: f64,
    floor: f64,
}

/// Residual-diagonal threshold for the √2σ feature factorization of the pivots.
const FEATURE_TOL: f64 = 1e-15;

struct Local {
    value: f64,
    grad_c: DVector<f64>,
    grad_a: DVector<f64>,
}

impl Reduced {
    fn new(problem: &RegressionProblem, lambda: f64, pivot_tol: f64) -> Result<Self> {
        let k = problem.gram();
        let (pivots, factor) = pivoted_cholesky(&k, pivot_tol);
        if pivots.is_empty() {
            return Err(Error::Numerical("empty pivot set".into()));
        }
        let r = pivots.len();
        let root = DMatrix::from_fn(r, r, |i, j| factor[(pivots[i], j)]);
        let anchors: Vec<Point> = pivots.iter().map(|&p| problem.train_x[p].clone()).collect();
        let wide = problem.kernel.widened().matrix(&anchors)?.into_entries();
        let (_, features) = pivoted_cholesky(&wide, FEATURE_TOL);
        // columns of R^{-T}: coefficients of the orthonormal basis functions
        let basis = root
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(r, r))
            .ok_or_else(|| Error::Numerical("singular pivot block".into()))?;
        let blocks = (0..r)
            .map(|j| features.transpose() * scale_rows(&basis.column(j).into_owned(), &features))
            .collect();
        Ok(Self {
            pivots,
            factor,
            root,
            blocks,
            labels: problem.labels(),
            lambda,
            floor: 0.0,
        })
    }

    fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// `a_P = R^{-T} c`.
    fn coefficients(&self, c: &DVector<f64>) -> DVector<f64> {
        self.root
            .tr_solve_lower_triangular(c)
            .expect("pivots are strictly positive")
    }

    /// Ridge warm start: `(LᵀL + nλI) c = Lᵀy`.
    fn ridge_start(&self) -> Result<DVector<f64>> {
        let n = self.labels.len() as f64;
        let mut normal = self.factor.transpose() * &self.factor;
        for i in 0..self.rank() {
            normal[(i, i)] += n * self.lambda;
        }
        let rhs = self.factor.transpose() * &self.labels;
        Ok(SymmetricSolver::new(&normal)?.solve(&rhs))
    }

    fn feature_matrix(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let m = self.blocks[0].nrows();
        let mut a = DMatrix::zeros(m, m);
        for (cj, b) in c.iter().zip(&self.blocks) {
            a += b * *cj;
        }
        a
    }

    fn value(&self, c: &DVector<f64>) -> f64 {
        let n = self.labels.len() as f64;
        let data = (&self.factor * c - &self.labels).norm_squared() / n;
        if self.lambda == 0.0 {
            return data;
        }
        let a = self.feature_matrix(c);
        let t = (&a * &a).norm_squared();
        data + self.lambda * (t + self.floor).sqrt()
    }

    fn local(&self, c: &DVector<f64>, with_hessian: bool) -> (Local, Option<DMatrix<f64>>) {
        let n = self.labels.len() as f64;
        let residual = &self.factor * c - &self.labels;
        let mut value = residual.norm_squared() / n;
        let mut grad_c = self.factor.transpose() * &residual * (2.0 / n);
        let mut hess = with_hessian.then(|| self.factor.transpose() * &self.factor * (2.0 / n));
        if self.lambda > 0.0 {
            let a = self.feature_matrix(c);
            let a2 = &a * &a;
            let a3 = &a2 * &a;
            let t = a2.norm_squared();
            let s = (t + self.floor).sqrt();
            value += self.lambda * s;
            // ∂T/∂c_j = 4 ⟨A³, B_j⟩
            let gt =
                DVector::from_iterator(self.rank(), self.blocks.iter().map(|b| 4.0 * a3.dot(b)));
            grad_c += &gt * (self.lambda / (2.0 * s));
            if let Some(h) = hess.as_mut() {
                // ∂²T/∂c_j∂c_k = 4 ⟨2 A²B_j + A B_j A, B_k⟩
                let r = self.rank();
                let mut ht = DMatrix::zeros(r, r);
                for (j, bj) in self.blocks.iter().enumerate() {
                    let m = &a2 * bj * 2.0 + &a * bj * &a;
                    for (k, bk) in self.blocks.iter().enumerate().skip(j) {
                        let v = 4.0 * m.dot(bk);
                        ht[(j, k)] = v;
                        ht[(k, j)] = v;
                    }
                }
                *h += ht * (self.lambda / (2.0 * s));
                *h -= &gt * gt.transpose() * (self.lambda / (4.0 * s * s * s));
            }
        }
        let grad_a = &self.root * &grad_c;
        (
            Local {
                value,
                grad_c,
                grad_a,
            },
            hess,
        )
    }

    fn scatter(&self, c: &DVector<f64>, n: usize) -> Vec<f64> {
        let a = self.coefficients(c);
        let mut full = vec![0.0; n];
        for (slot, &p) in self.pivots.iter().enumerate() {
            full[p] = a[slot];
        }
        full
    }
}

/// Solves `(H + τI) d = −g`, raising `τ` until the shifted matrix is positive
/// definite and `d` is a descent direction.
fn damped_newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut tau = 0.0;
    loop {
        let mut shifted = h.clone();
        for i in 0..h.nrows() {
            shifted[(i, i)] += tau;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let d = -chol.solve(g);
            if d.iter().all(|x| x.is_finite()) && d.dot(g) < 0.0 {
                return d;
            }
        }
        tau = if tau == 0.0 {
            1e-12 * scale
        } else {
            tau * 10.0
        };
        if tau > 1e12 * scale {
            return -g.clone();
        }
    }
}

fn reduced_newton(problem: &RegressionProblem, lambda: f64, opts: &FitOptions) -> Result<Run> {
    let mut reduced = Reduced::new(problem, lambda, opts.pivot_tol)?;
    reduced.floor = opts.floor;
    let start = reduced.ridge_start()?;
    newton_from(&reduced, start, problem.len(), opts)
}

fn newton_from(reduced: &Reduced, mut c: DVector<f64>, n: usize, opts: &FitOptions) -> Result<Run> {
    let mut iterations = 0;
    let mut converged = false;
    let mut current = reduced.local(&c, false).0;
    if !current.value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite initial objective {}",
            current.value
        )));
    }
    while iterations < opts.max_iters {
        if current.grad_a.amax() <= opts.tol && current.grad_c.amax() <= opts.tol {
            converged = true;
            break;
        }
        let (_, hess) = reduced.local(&c, true);
        let direction = damped_newton_direction(&hess.expect("requested"), &current.grad_c);
        let slope = direction.dot(&current.grad_c);
        let mut step = opts.initial_step;
        let accepted = loop {
            let candidate = &c + &direction * step;
            let v = reduced.value(&candidate);
            if v.is_infinite() {
                return Err(Error::Numerical(format!("objective diverged to {v}")));
            }
            if v <= current.value + opts.armijo * step * slope {
                break Some(candidate);
            }
            step *= opts.shrink;
            if step < 1e-20 {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some(next) => {
                c = next;
                current = reduced.local(&c, false).0;
            }
            None => break,
        }
    }
    if !current.value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite objective {}",
            current.value
        )));
    }
    Ok(Run {
        coefficients: reduced.scatter(&c, n),
        objective: current.value,
        iterations,
        converged,
    })
}

/// What the model is compared against in [`risk`].
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// A ground-truth function `h`.
    Function(&'a RkhsFunction),
    /// Labels aligned with the points of the evaluation sample.
    Labels(&'a [f64]),
}

/// `R_Q(f) = Σ_i w_i (f(x_i) − t_i)²`.
pub fn risk(model: &RkhsFunction, target: Target<'_>, q: &WeightedSample) -> Result<f64> {
    if model.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: q.dim(),
        });
    }
    match target {
        Target::Function(h) => {
            if h.dim() != q.dim() {
                return Err(Error::DimensionMismatch {
                    expected: h.dim(),
                    found: q.dim(),
                });
            }
            Ok(q.expectation(|x| {
                let r = model.evaluate_unchecked(x) - h.evaluate_unchecked(x);
                r * r
            }))
        }
        Target::Labels(labels) => {
            if labels.len() != q.len() {
                return Err(Error::DimensionMismatch {
                    expected: q.len(),
                    found: labels.len(),
                });
            }
            Ok(q.points()
                .iter()
                .zip(q.weights())
                .zip(labels)
                .map(|((x, w), y)| {
                    let r = model.evaluate_unchecked(x) - y;
                    w * r * r
                })
                .sum())
        }
    }
}
