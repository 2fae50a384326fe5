//! Dense helpers shared by the numerical modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter ladder, scaled by the mean diagonal.
pub const JITTER_LADDER: [f64; 3] = [0.0, 1e-12, 1e-10];

/// Cholesky factorization of a symmetric positive (semi)definite matrix with
/// escalating diagonal jitter. Immutable once built, so one factorization can
/// serve many right-hand sides.
#[derive(Debug, Clone)]
pub struct SymmetricSolver {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SymmetricSolver {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::Empty("matrix"));
        }
        let mean_diag = matrix.trace() / n as f64;
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut last = 0.0;
        for rel in JITTER_LADDER {
            let jitter = rel * scale;
            last = jitter;
            let mut m = matrix.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(m) {
                let ok = chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .all(|d| d.is_finite() && *d > 0.0);
                if ok {
                    return Ok(Self { chol, jitter });
                }
            }
        }
        Err(Error::Singular { jitter: last })
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Pivoted (partial) Cholesky factorization `K[:, p] ≈ L L[p, :]^T`.
///
/// Stops once the largest remaining diagonal of the Schur complement drops to
/// `tol`. Returns the selected pivots in order and the `n × r` factor `L`, so
/// that `K ≈ L Lᵀ` with the residual trace bounded by `n · tol`.
pub fn pivoted_cholesky(matrix: &DMatrix<f64>, tol: f64) -> (Vec<usize>, DMatrix<f64>) {
    let n = matrix.nrows();
    let mut residual: Vec<f64> = (0..n).map(|i| matrix[(i, i)]).collect();
    let mut pivots = Vec::new();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    loop {
        let next = residual
            .iter()
            .enumerate()
            .filter(|(i, _)| !pivots.contains(i))
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v));
        let Some((best, best_val)) = next else {
            break;
        };
        if best_val <= tol {
            break;
        }
        let root = best_val.sqrt();
        let mut col = DVector::zeros(n);
        for i in 0..n {
            let mut v = matrix[(i, best)];
            for c in &columns {
                v -= c[i] * c[best];
            }
            col[i] = v / root;
        }
        for i in 0..n {
            residual[i] -= col[i] * col[i];
        }
        residual[best] = 0.0;
        pivots.push(best);
        columns.push(col);
    }
    let l = if columns.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    (pivots, l)
}

/// Largest absolute entry of `m - mᵀ`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let asym = max_asymmetry(m);
    let scale = m.amax().max(1.0);
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// `trace(A B) = Σ_ij A_ij B_ji` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `diag(d) · m`, scaling row `i` by `d[i]`.
pub fn scale_rows(d: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}
