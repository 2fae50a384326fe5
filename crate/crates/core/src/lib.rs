//! Distributionally robust optimization over maximum-mean-discrepancy balls.
//!
//! * [`kernel`]: Gaussian kernels and Gram matrices at σ, √2σ and σ/√2.
//! * [`rkhs`]: finite kernel expansions, norms and the product-norm trace forms.
//! * [`mmd`]: weighted samples, MMD and the concentration radius.
//! * [`dro`]: worst-case adversaries and generalization-bound calculators.
//! * [`krr`]: kernel ridge regression with the classic or product-norm regularizer.
//! * [`experiment`]: the synthetic λ-sweep harness.

pub mod dro;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod krr;
pub mod linalg;
pub mod mmd;
pub mod rkhs;

pub use dro::{
    discrete_adversary, embedding_worst_case, empirical_variance, krr_generalization_bound,
    mohri_reference_bound, variance_penalty_special, AdversarySolution, BoundReport,
    DiscreteAdversary, EmbeddingWorstCase, NormBudgets,
};
pub use error::{Error, Result};
pub use experiment::{
    aggregate, run_sweep, synthesize, ExperimentConfig, Regime, SummaryRow, TrialRecord,
};
pub use kernel::{BandwidthFactor, GaussianKernel, KernelMatrix, Point};
pub use krr::{
    fit_classic, fit_product_norm, risk, FitOptions, FitReport, RegressionProblem, RegularizerKind,
    Solver, Target,
};
pub use mmd::{mmd, radius, Radius, WeightedSample};
pub use rkhs::{product_norm, trace_submultiplicative_check, RkhsFunction};
