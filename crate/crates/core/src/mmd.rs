//! Maximum mean discrepancy between weighted samples, computed as the RKHS
//! distance between mean embeddings (the biased V-statistic), and the
//! concentration radius `ε(n, δ, M) = 2√(M/n) + √(2 ln(1/δ)/n)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ensure_points, GaussianKernel, Point};
use crate::rkhs::{RkhsFunction, NEGATIVE_TOL};

/// Discrete probability distribution `Σ_i w_i δ_{x_i}` with `w ≥ 0`, `Σ w = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSample {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl WeightedSample {
    /// Validates and renormalizes `weights` to sum to one.
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        ensure_points(&points)?;
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(
                "weights",
                format!("must be finite and nonnegative, got {w}"),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights", "must have positive total mass"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    /// Empirical distribution with weight `1/n` on each point.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Mean embedding `μ = Σ_i w_i k(x_i, ·)`.
    pub fn embedding(&self, kernel: &GaussianKernel) -> RkhsFunction {
        RkhsFunction::new(self.points.clone(), self.weights.clone(), *kernel)
            .expect("sample invariants imply a valid expansion")
    }

    /// `E_{x∼self}[g(x)] = Σ_i w_i g(x_i)`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// `‖μ_P − μ_Q‖_H`.
pub fn mmd(kernel: &GaussianKernel, p: &WeightedSample, q: &WeightedSample) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let w = DVector::from_column_slice(&p.weights);
    let u = DVector::from_column_slice(&q.weights);
    let kpp = kernel.matrix(&p.points)?;
    let kqq = kernel.matrix(&q.points)?;
    let kpq = kernel.cross_matrix(&p.points, &q.points)?;
    let radicand = (w.transpose() * kpp.entries() * &w)[0] - 2.0 * (w.transpose() * kpq * &u)[0]
        + (u.transpose() * kqq.entries() * &u)[0];
    if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand >= -NEGATIVE_TOL {
        Ok(0.0)
    } else {
        Err(Error::Indefinite(radicand))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radius {
    pub epsilon: f64,
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

/// Radius such that `mmd(P, P̂ₙ) ≤ ε` with probability `1 − δ` when `k(x,x) ≤ M`.
pub fn radius(n: usize, delta: f64, m: f64) -> Result<Radius> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in (0, 1), got {delta}"),
        ));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid(
            "M",
            format!("must be finite and > 0, got {m}"),
        ));
    }
    let nf = n as f64;
    let epsilon = 2.0 * (m / nf).sqrt() + (2.0 * (1.0 / delta).ln() / nf).sqrt();
    Ok(Radius {
        epsilon,
        n,
        delta,
        m,
    })
}
