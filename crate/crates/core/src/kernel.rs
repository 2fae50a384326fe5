//! Gaussian kernels `k_σ(x, y) = exp(−‖x − y‖² / (2σ²))` and their Gram matrices.
//!
//! Products of σ-bandwidth functions live at bandwidth σ/√2 and their trace
//! forms use Gram matrices at √2σ, so bandwidths only ever move by factors of
//! √2. [`GaussianKernel`] keeps the base bandwidth and an integer count of
//! half-octave steps, which makes `scaled(√2)` followed by `scaled(1/√2)`
//! return the exact original σ.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A point in ℝᵈ.
pub type Point = Vec<f64>;

/// The two bandwidth moves the RKHS product algebra needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandwidthFactor {
    /// σ → √2·σ
    Sqrt2,
    /// σ → σ/√2
    InvSqrt2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct GaussianKernel {
    base: f64,
    half_steps: i32,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    sigma: f64,
}

impl TryFrom<KernelRepr> for GaussianKernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        GaussianKernel::new(r.sigma)
    }
}

impl From<GaussianKernel> for KernelRepr {
    fn from(k: GaussianKernel) -> Self {
        KernelRepr { sigma: k.sigma() }
    }
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(
                "sigma",
                format!("must be finite and > 0, got {sigma}"),
            ));
        }
        Ok(Self {
            base: sigma,
            half_steps: 0,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.base * SQRT_2.powi(self.half_steps)
    }

    /// Bound `M` on `k(x, x)`; always 1 for a Gaussian kernel.
    pub fn diagonal_bound(&self) -> f64 {
        1.0
    }

    pub fn scaled(&self, factor: BandwidthFactor) -> Self {
        let step = match factor {
            BandwidthFactor::Sqrt2 => 1,
            BandwidthFactor::InvSqrt2 => -1,
        };
        Self {
            base: self.base,
            half_steps: self.half_steps + step,
        }
    }

    /// Kernel at √2·σ, the Gram bandwidth of the product trace forms.
    pub fn widened(&self) -> Self {
        self.scaled(BandwidthFactor::Sqrt2)
    }

    /// Kernel at σ/√2, the RKHS that holds products of σ-functions.
    pub fn narrowed(&self) -> Self {
        self.scaled(BandwidthFactor::InvSqrt2)
    }

    /// Same bandwidth up to a relative `1e-12`.
    pub fn same_bandwidth(&self, other: &GaussianKernel) -> bool {
        let (a, b) = (self.sigma(), other.sigma());
        (a - b).abs() <= 1e-12 * a.max(b)
    }

    pub(crate) fn ensure_same_bandwidth(&self, other: &GaussianKernel) -> Result<()> {
        if self.same_bandwidth(other) {
            Ok(())
        } else {
            Err(Error::BandwidthMismatch {
                left: self.sigma(),
                right: other.sigma(),
            })
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sigma = self.sigma();
        (-squared_distance(x, y) / (2.0 * sigma * sigma)).exp()
    }

    pub fn matrix(&self, points: &[Point]) -> Result<KernelMatrix> {
        ensure_points(points)?;
        let n = points.len();
        let mut entries = DMatrix::from_element(n, n, 1.0);
        for i in 0..n {
            for j in 0..i {
                let v = self.eval_unchecked(&points[i], &points[j]);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Ok(KernelMatrix {
            entries,
            bandwidth: self.sigma(),
        })
    }

    /// Rectangular matrix `C_ij = k(rows_i, cols_j)`.
    pub fn cross_matrix(&self, rows: &[Point], cols: &[Point]) -> Result<DMatrix<f64>> {
        let d = ensure_points(rows)?;
        let d2 = ensure_points(cols)?;
        if d != d2 {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: d2,
            });
        }
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.eval_unchecked(&rows[i], &cols[j])
        }))
    }
}

/// `‖x − y‖²` summed coordinate-wise; no `‖x‖² + ‖y‖² − 2xᵀy` shortcut.
#[inline]
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Checks that `points` is nonempty with a consistent dimension; returns it.
pub(crate) fn ensure_points(points: &[Point]) -> Result<usize> {
    let first = points.first().ok_or(Error::Empty("point list"))?;
    let d = first.len();
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    Ok(d)
}

/// Symmetric Gram matrix of a Gaussian kernel with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    bandwidth: f64,
}

impl KernelMatrix {
    /// Wraps an externally supplied kernel matrix (e.g. `aI + b11ᵀ`), checking
    /// symmetry. The unit-diagonal property is not required here.
    pub fn from_entries(entries: DMatrix<f64>, bandwidth: f64) -> Result<Self> {
        if entries.nrows() == 0 {
            return Err(Error::Empty("kernel matrix"));
        }
        linalg::ensure_symmetric(&entries, 1e-12)?;
        Ok(Self { entries, bandwidth })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.entries)
    }

    /// PSD up to `−tol·n` on the smallest eigenvalue.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol * self.size() as f64
    }
}
