//! Worst-case adversaries over MMD balls and the generalization bounds they imply.
//!
//! Two adversaries are provided:
//!
//! * [`embedding_worst_case`]: the adversary moves the mean embedding anywhere
//!   in the RKHS ball `‖μ_Q − μ_P‖ ≤ ε`. The supremum is
//!   `E_P[ℓ] + ε‖ℓ‖_H`, attained at `μ_Q* = μ_P + (ε/‖ℓ‖) ℓ`.
//! * [`discrete_adversary`]: the adversary reweights the sample support,
//!   `max ℓᵀw` s.t. `(w − 1/n)ᵀK(w − 1/n) ≤ ε²`, `1ᵀw = 1`. With the `w ≥ 0`
//!   constraints dropped the optimum is
//!   `mean(ℓ) + ε √(ℓᵀK⁻¹ℓ − (ℓᵀK⁻¹1)² / 1ᵀK⁻¹1)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg::SymmetricSolver;
use crate::mmd::WeightedSample;
use crate::rkhs::RkhsFunction;

/// Penalties at or below this are treated as a loss proportional to `1`.
pub const DEGENERATE_PENALTY: f64 = 1e-12;

/// `w*` entries below `−NONNEGATIVITY_TOL` mean the dropped `w ≥ 0` constraints bind.
pub const NONNEGATIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingWorstCase {
    pub value: f64,
    pub base_risk: f64,
    pub loss_norm: f64,
    pub worst_embedding: RkhsFunction,
    pub epsilon: f64,
}

/// Supremum of `⟨ℓ, μ_Q⟩` over the ball `‖μ_Q − μ_P‖_H ≤ ε`.
pub fn embedding_worst_case(
    loss: &RkhsFunction,
    p: &WeightedSample,
    epsilon: f64,
) -> Result<EmbeddingWorstCase> {
    check_epsilon(epsilon)?;
    if loss.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: loss.dim(),
            found: p.dim(),
        });
    }
    let mean_embedding = p.embedding(loss.kernel());
    let base_risk = p.expectation(|x| loss.evaluate_unchecked(x));
    let loss_norm = loss.norm()?;
    let worst_embedding = if loss_norm > 0.0 && epsilon > 0.0 {
        mean_embedding.linear_combination(1.0, loss, epsilon / loss_norm)?
    } else {
        mean_embedding
    };
    Ok(EmbeddingWorstCase {
        value: base_risk + epsilon * loss_norm,
        base_risk,
        loss_norm,
        worst_embedding,
        epsilon,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "epsilon",
            format!("must be finite and >= 0, got {epsilon}"),
        ))
    }
}

/// Closed-form solution of the support-restricted adversary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarySolution {
    pub weights: Vec<f64>,
    pub value: f64,
    pub lambda_star: f64,
    /// Multiplier of the MMD-ball constraint; `+∞` (JSON `null`) when `ε = 0`
    /// or the loss is constant.
    pub eta_star: f64,
    pub nonnegativity_violated: bool,
    pub penalty: f64,
    pub epsilon: f64,
}

impl AdversarySolution {
    /// Infinity norm of the stationarity residual `ℓ − 2η* K v* − λ* 1`, with
    /// `v* = w* − 1/n`. `None` when the dual is degenerate (`η* = ∞`).
    pub fn kkt_residual(&self, loss_values: &[f64], kernel: &DMatrix<f64>) -> Option<f64> {
        if !self.eta_star.is_finite() {
            return None;
        }
        let n = self.weights.len() as f64;
        let v =
            DVector::from_iterator(self.weights.len(), self.weights.iter().map(|w| w - 1.0 / n));
        let kv = kernel * v;
        loss_values
            .iter()
            .zip(kv.iter())
            .map(|(l, kv)| (l - 2.0 * self.eta_star * kv - self.lambda_star).abs())
            .reduce(f64::max)
    }

    /// `(w* − 1/n)ᵀ K (w* − 1/n)`, which equals `ε²` when the ball constraint binds.
    pub fn mmd_squared(&self, kernel: &DMatrix<f64>) -> f64 {
        let n = self.weights.len() as f64;
        let v =
            DVector::from_iterator(self.weights.len(), self.weights.iter().map(|w| w - 1.0 / n));
        (v.transpose() * kernel * &v)[0]
    }
}

/// A factorized kernel matrix, reusable across loss vectors and radii.
#[derive(Debug, Clone)]
pub struct DiscreteAdversary {
    solver: SymmetricSolver,
    ones_solved: DVector<f64>,
    ones_quad: f64,
}

impl DiscreteAdversary {
    pub fn new(kernel: &KernelMatrix) -> Result<Self> {
        let solver = SymmetricSolver::new(kernel.entries())?;
        let n = kernel.size();
        let ones_solved = solver.solve(&DVector::from_element(n, 1.0));
        let ones_quad = ones_solved.sum();
        if !(ones_quad.is_finite() && ones_quad > 0.0) {
            return Err(Error::Numerical(format!("1ᵀK⁻¹1 = {ones_quad}")));
        }
        Ok(Self {
            solver,
            ones_solved,
            ones_quad,
        })
    }

    pub fn size(&self) -> usize {
        self.ones_solved.len()
    }

    /// Jitter added to the kernel diagonal before factorizing.
    pub fn jitter(&self) -> f64 {
        self.solver.jitter()
    }

    pub fn solve(&self, loss_values: &[f64], epsilon: f64) -> Result<AdversarySolution> {
        check_epsilon(epsilon)?;
        let n = self.size();
        if loss_values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: loss_values.len(),
            });
        }
        if loss_values.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("loss_values", "must be finite"));
        }
        let loss = DVector::from_column_slice(loss_values);
        let mean = loss.mean();
        let loss_solved = self.solver.solve(&loss);
        let lambda_star = loss_solved.sum() / self.ones_quad;
        let centered = loss.add_scalar(-lambda_star);
        let direction = &loss_solved - &self.ones_solved * lambda_star;
        let penalty_sq = centered.dot(&direction);
        if !(lambda_star.is_finite() && penalty_sq.is_finite()) {
            return Err(Error::Numerical(format!(
                "λ* = {lambda_star}, penalty² = {penalty_sq}"
            )));
        }
        if penalty_sq < -1e-10 * (1.0 + loss.norm_squared()) {
            return Err(Error::Indefinite(penalty_sq));
        }
        let penalty = penalty_sq.max(0.0).sqrt();
        let uniform = vec![1.0 / n as f64; n];
        if penalty <= DEGENERATE_PENALTY {
            return Ok(AdversarySolution {
                weights: uniform,
                value: mean,
                lambda_star,
                eta_star: f64::INFINITY,
                nonnegativity_violated: false,
                penalty: 0.0,
                epsilon,
            });
        }
        let step = epsilon / penalty;
        let weights: Vec<f64> = uniform
            .iter()
            .zip(direction.iter())
            .map(|(u, d)| u + step * d)
            .collect();
        let min_w = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let eta_star = if epsilon > 0.0 {
            penalty / (2.0 * epsilon)
        } else {
            f64::INFINITY
        };
        Ok(AdversarySolution {
            weights,
            value: mean + epsilon * penalty,
            lambda_star,
            eta_star,
            nonnegativity_violated: min_w < -NONNEGATIVITY_TOL,
            penalty,
            epsilon,
        })
    }
}

/// One-shot form of [`DiscreteAdversary::solve`].
pub fn discrete_adversary(
    loss_values: &[f64],
    kernel: &KernelMatrix,
    epsilon: f64,
) -> Result<AdversarySolution> {
    DiscreteAdversary::new(kernel)?.solve(loss_values, epsilon)
}

/// Population-style variance `E[ℓ²] − E[ℓ]²` under uniform weights.
pub fn empirical_variance(loss_values: &[f64]) -> Result<f64> {
    if loss_values.is_empty() {
        return Err(Error::Empty("loss values"));
    }
    let n = loss_values.len() as f64;
    let mean = loss_values.iter().sum::<f64>() / n;
    // centered two-pass form; never negative
    Ok(loss_values
        .iter()
        .map(|l| (l - mean) * (l - mean))
        .sum::<f64>()
        / n)
}

/// Discrete-adversary penalty for `K = aI + b11ᵀ`, which collapses to
/// `a^{-1/2} √n √Var(ℓ)`. The closed form is cross-checked against the
/// general solver; a relative disagreement above `1e-8` is an error.
pub fn variance_penalty_special(loss_values: &[f64], a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid("a", format!("must be > 0, got {a}")));
    }
    let n = loss_values.len();
    if n == 0 {
        return Err(Error::Empty("loss values"));
    }
    if a + b * n as f64 <= 0.0 {
        return Err(Error::invalid("b", "aI + b11ᵀ must be positive definite"));
    }
    let closed = (n as f64).sqrt() * empirical_variance(loss_values)?.sqrt() / a.sqrt();
    let k = DMatrix::from_fn(n, n, |i, j| if i == j { a + b } else { b });
    let general =
        discrete_adversary(loss_values, &KernelMatrix::from_entries(k, f64::NAN)?, 1.0)?.penalty;
    let scale = closed.abs().max(general.abs());
    if scale > DEGENERATE_PENALTY && (closed - general).abs() > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "variance closed form {closed} disagrees with general penalty {general}"
        )));
    }
    Ok(closed)
}

/// Norm budgets `‖f²‖ ≤ Λ_{f²}`, `‖h²‖ ≤ Λ_{h²}`, `‖f‖ ≤ Λ_f`, `‖h‖ ≤ Λ_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBudgets {
    pub lambda_f2: f64,
    pub lambda_h2: f64,
    pub lambda_f: f64,
    pub lambda_h: f64,
}

impl NormBudgets {
    /// The single-Λ specialization `Λ_{f²} = Λ_{h²} = Λ²`, `Λ_f = Λ_h = Λ`.
    pub fn uniform(lambda: f64) -> Self {
        Self {
            lambda_f2: lambda * lambda,
            lambda_h2: lambda * lambda,
            lambda_f: lambda,
            lambda_h: lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub empirical_risk: f64,
    pub epsilon: f64,
    pub lambda_f2: f64,
    pub lambda_h2: f64,
    pub lambda_f: f64,
    pub lambda_h: f64,
    /// `ε·(Λ_{f²} + Λ_{h²} + 2Λ_fΛ_h)`, kept separately so it is exact even when
    /// it is tiny next to the empirical risk.
    pub slack: f64,
    pub bound: f64,
}

impl BoundReport {
    pub fn slack(&self) -> f64 {
        self.slack
    }
}

fn check_bound_inputs(n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in (0, 1), got {delta}"),
        ));
    }
    Ok((1.0 / delta).ln())
}

/// Population-risk bound for Gaussian KRR from the MMD-DRO argument:
/// `R_P(f) ≤ R_P̂(f) + (2/√n)(1 + √(ln(1/δ)/2)) (Λ_{f²} + Λ_{h²} + 2Λ_fΛ_h)`.
pub fn krr_generalization_bound(
    empirical_risk: f64,
    n: usize,
    delta: f64,
    budgets: NormBudgets,
) -> Result<BoundReport> {
    let log_term = check_bound_inputs(n, delta)?;
    let NormBudgets {
        lambda_f2,
        lambda_h2,
        lambda_f,
        lambda_h,
    } = budgets;
    if [lambda_f2, lambda_h2, lambda_f, lambda_h]
        .iter()
        .any(|l| l.is_nan() || *l < 0.0)
    {
        return Err(Error::invalid("lambdas", "norm budgets must be >= 0"));
    }
    let epsilon = 2.0 / (n as f64).sqrt() * (1.0 + (log_term / 2.0).sqrt());
    let slack = epsilon * (lambda_f2 + lambda_h2 + 2.0 * lambda_f * lambda_h);
    Ok(BoundReport {
        empirical_risk,
        epsilon,
        lambda_f2,
        lambda_h2,
        lambda_f,
        lambda_h,
        slack,
        bound: empirical_risk + slack,
    })
}

/// Classical KRR bound `R_P̂(f) + (8Λ²/√n)(1 + ½√(ln(1/δ)/2))`, kept for comparison.
pub fn mohri_reference_bound(
    empirical_risk: f64,
    n: usize,
    delta: f64,
    lambda: f64,
) -> Result<f64> {
    let log_term = check_bound_inputs(n, delta)?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    Ok(empirical_risk
        + 8.0 * lambda * lambda / (n as f64).sqrt() * (1.0 + 0.5 * (log_term / 2.0).sqrt()))
}
