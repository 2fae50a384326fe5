//! Finite kernel expansions `f = Σ_i a_i k_σ(x_i, ·)` and the Gaussian product
//! norm algebra.
//!
//! With `K̃` the anchor Gram matrix at bandwidth √2σ and `D_a = diag(a)`:
//!
//! ```text
//! ‖f‖²_σ          = aᵀ (K̃ ∘ K̃) a
//! ‖f g‖²_{σ/√2}   = trace((D_a K̃)² (D_b K̃)²)
//! ‖f²‖²_{σ/√2}    = trace((D_a K̃)⁴)
//! ```
//!
//! and `‖f g‖_{σ/√2} ≤ ‖f‖_σ ‖g‖_σ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ensure_points, GaussianKernel, KernelMatrix, Point};
use crate::linalg::{self, scale_rows, trace_of_product};

/// Quadratic forms in `[-NEGATIVE_TOL, 0]` are rounding noise and clamp to 0.
pub const NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunction")]
pub struct RkhsFunction {
    anchors: Vec<Point>,
    coefficients: Vec<f64>,
    kernel: GaussianKernel,
}

#[derive(Deserialize)]
struct RawFunction {
    anchors: Vec<Point>,
    coefficients: Vec<f64>,
    kernel: GaussianKernel,
}

impl TryFrom<RawFunction> for RkhsFunction {
    type Error = Error;
    fn try_from(r: RawFunction) -> Result<Self> {
        RkhsFunction::new(r.anchors, r.coefficients, r.kernel)
    }
}

impl RkhsFunction {
    pub fn new(
        anchors: Vec<Point>,
        coefficients: Vec<f64>,
        kernel: GaussianKernel,
    ) -> Result<Self> {
        ensure_points(&anchors)?;
        if anchors.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                found: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coefficients", "must be finite"));
        }
        Ok(Self {
            anchors,
            coefficients,
            kernel,
        })
    }

    /// `c · k_σ(anchor, ·)`.
    pub fn single(anchor: Point, coefficient: f64, kernel: GaussianKernel) -> Result<Self> {
        Self::new(vec![anchor], vec![coefficient], kernel)
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        self.anchors
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, c)| **c != 0.0)
            .map(|(p, c)| c * self.kernel.eval_unchecked(p, x))
            .sum()
    }

    pub fn evaluate_many(&self, points: &[Point]) -> Result<Vec<f64>> {
        points.iter().map(|x| self.evaluate(x)).collect()
    }

    /// Gram matrix of the anchors at the function's own bandwidth σ.
    pub fn anchor_matrix(&self) -> KernelMatrix {
        self.kernel
            .matrix(&self.anchors)
            .expect("anchors validated on construction")
    }

    /// Gram matrix of the anchors at √2σ (`K̃` in the trace forms).
    pub fn widened_anchor_matrix(&self) -> DMatrix<f64> {
        self.kernel
            .widened()
            .matrix(&self.anchors)
            .expect("anchors validated on construction")
            .into_entries()
    }

    /// `⟨f, g⟩_σ = aᵀ K_σ(X_f, X_g) b`.
    pub fn inner(&self, other: &RkhsFunction) -> Result<f64> {
        self.kernel.ensure_same_bandwidth(&other.kernel)?;
        let cross = self.kernel.cross_matrix(&self.anchors, &other.anchors)?;
        Ok((self.coefficient_vector().transpose() * cross * other.coefficient_vector())[0])
    }

    pub fn norm_squared(&self) -> Result<f64> {
        let a = self.coefficient_vector();
        let q = (a.transpose() * self.anchor_matrix().entries() * &a)[0];
        clamp_quadratic(q, a.norm_squared())
    }

    pub fn norm(&self) -> Result<f64> {
        Ok(self.norm_squared()?.sqrt())
    }

    pub fn scale(&self, factor: f64) -> RkhsFunction {
        Self {
            anchors: self.anchors.clone(),
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
            kernel: self.kernel,
        }
    }

    /// `α f + β g` as a concatenated expansion.
    pub fn linear_combination(
        &self,
        alpha: f64,
        other: &RkhsFunction,
        beta: f64,
    ) -> Result<RkhsFunction> {
        let (anchors, a, b) = merge_expansions(self, other)?;
        let coefficients = a
            .iter()
            .zip(&b)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        RkhsFunction::new(anchors, coefficients, self.kernel)
    }

    /// The pointwise product `f g` as an exact expansion in `H_{σ/√2}`:
    /// anchors at midpoints `(x_i + x_j)/2`, coefficients `a_i b_j k_{√2σ}(x_i, x_j)`.
    pub fn pointwise_product(&self, other: &RkhsFunction) -> Result<RkhsFunction> {
        self.kernel.ensure_same_bandwidth(&other.kernel)?;
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let wide = self.kernel.widened();
        let mut anchors = Vec::with_capacity(self.len() * other.len());
        let mut coefficients = Vec::with_capacity(self.len() * other.len());
        for (xi, ai) in self.anchors.iter().zip(&self.coefficients) {
            for (xj, bj) in other.anchors.iter().zip(&other.coefficients) {
                anchors.push(xi.iter().zip(xj).map(|(p, q)| 0.5 * (p + q)).collect());
                coefficients.push(ai * bj * wide.eval_unchecked(xi, xj));
            }
        }
        RkhsFunction::new(anchors, coefficients, self.kernel.narrowed())
    }

    /// `‖f²‖²_{σ/√2} = trace((D K̃)⁴)`.
    pub fn squared_norm_trace(&self) -> f64 {
        fourth_power_trace(&self.coefficient_vector(), &self.widened_anchor_matrix())
    }

    /// Gradient of [`squared_norm_trace`](Self::squared_norm_trace) in the coefficients.
    pub fn squared_norm_trace_gradient(&self) -> DVector<f64> {
        fourth_power_trace_gradient(&self.coefficient_vector(), &self.widened_anchor_matrix())
    }
}

fn clamp_quadratic(q: f64, scale: f64) -> Result<f64> {
    if q >= 0.0 {
        Ok(q)
    } else if q >= -NEGATIVE_TOL * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Indefinite(q))
    }
}

/// Rewrites `f` and `g` over a shared anchor list. Identical anchor lists are
/// reused as-is; otherwise anchors are concatenated and coefficients zero-padded.
pub fn merge_expansions(
    f: &RkhsFunction,
    g: &RkhsFunction,
) -> Result<(Vec<Point>, Vec<f64>, Vec<f64>)> {
    f.kernel.ensure_same_bandwidth(&g.kernel)?;
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
        });
    }
    if f.anchors == g.anchors {
        return Ok((
            f.anchors.clone(),
            f.coefficients.clone(),
            g.coefficients.clone(),
        ));
    }
    let mut anchors = f.anchors.clone();
    anchors.extend(g.anchors.iter().cloned());
    let mut a = f.coefficients.clone();
    a.resize(anchors.len(), 0.0);
    let mut b = vec![0.0; f.len()];
    b.extend_from_slice(&g.coefficients);
    Ok((anchors, a, b))
}

/// `‖f g‖²_{σ/√2} = trace((D_a K̃)² (D_b K̃)²)`.
pub fn product_norm_squared(f: &RkhsFunction, g: &RkhsFunction) -> Result<f64> {
    let (anchors, a, b) = merge_expansions(f, g)?;
    let wide = f.kernel.widened().matrix(&anchors)?.into_entries();
    let t = product_trace(
        &DVector::from_vec(a.clone()),
        &DVector::from_vec(b.clone()),
        &wide,
    );
    let scale = a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>();
    clamp_quadratic(t, scale)
}

pub fn product_norm(f: &RkhsFunction, g: &RkhsFunction) -> Result<f64> {
    Ok(product_norm_squared(f, g)?.sqrt())
}

/// `trace((D_a K)² (D_b K)²)`.
pub fn product_trace(a: &DVector<f64>, b: &DVector<f64>, k: &DMatrix<f64>) -> f64 {
    let ma = scale_rows(a, k);
    let mb = scale_rows(b, k);
    trace_of_product(&(&ma * &ma), &(&mb * &mb))
}

/// `trace((D_a K)⁴)`.
pub fn fourth_power_trace(a: &DVector<f64>, k: &DMatrix<f64>) -> f64 {
    let m = scale_rows(a, k);
    let m2 = &m * &m;
    trace_of_product(&m2, &m2)
}

/// `∂/∂a_i trace((D_a K)⁴) = 4 [K (D_a K)³]_ii`.
pub fn fourth_power_trace_gradient(a: &DVector<f64>, k: &DMatrix<f64>) -> DVector<f64> {
    let m = scale_rows(a, k);
    let m3 = &m * &m * &m;
    let n = a.len();
    DVector::from_fn(n, |i, _| 4.0 * k.row(i).dot(&m3.column(i).transpose()))
}

/// Hessian of `trace((D_a K)⁴)`:
/// `4 [2 K ∘ (K D K D K) + (K D K) ∘ (K D K)]`.
pub fn fourth_power_trace_hessian(a: &DVector<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let m = scale_rows(a, k);
    let kdk = k * &m;
    let kdkdk = &kdk * &m;
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| {
        4.0 * (2.0 * k[(i, j)] * kdkdk[(i, j)] + kdk[(i, j)] * kdk[(i, j)])
    })
}

/// `trace(XY) ≤ trace(X)·trace(Y) + 1e-9` for symmetric `X`, `Y` of equal size.
pub fn trace_submultiplicative_check(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<bool> {
    linalg::ensure_symmetric(x, 1e-10)?;
    linalg::ensure_symmetric(y, 1e-10)?;
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    Ok(trace_of_product(x, y) <= x.trace() * y.trace() + 1e-9)
}
