//! Synthetic regression sweep comparing the classic and product-norm ridge
//! regularizers.
//!
//! The population is a fixed sample of standard normal points; the ground
//! truth `h` is a kernel expansion; each trial subsamples training inputs from
//! the population and labels them `y_i = h(x_i) + noise`. Population risk is
//! the mean of `(f − h)²` over the whole population sample.
//!
//! Every trial owns a ChaCha stream selected by its index, so results do not
//! depend on how trials are scheduled across threads.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GaussianKernel, Point};
use crate::krr::{
    fit_classic, fit_product_norm, risk, FitOptions, RegressionProblem, RegularizerKind, Target,
};
use crate::mmd::WeightedSample;
use crate::rkhs::RkhsFunction;

/// z-value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `n = 10³` training points, noise variance `10⁻²`.
    Easy,
    /// `n = 10²` training points, noise variance `1`.
    Hard,
}

impl Regime {
    pub fn train_size(&self) -> usize {
        match self {
            Regime::Easy => 1000,
            Regime::Hard => 100,
        }
    }

    pub fn noise_var(&self) -> f64 {
        match self {
            Regime::Easy => 1e-2,
            Regime::Hard => 1.0,
        }
    }

    pub fn default_trials(&self) -> usize {
        match self {
            Regime::Easy => 100,
            Regime::Hard => 1000,
        }
    }

    /// 15 log-spaced values per regularizer.
    pub fn default_grid(&self, kind: RegularizerKind) -> Vec<f64> {
        let (lo, hi) = match (self, kind) {
            (Regime::Easy, RegularizerKind::ClassicSqNorm) => (-7.0, -1.0),
            (Regime::Easy, RegularizerKind::ProductNorm) => (-7.0, -1.0),
            (Regime::Hard, RegularizerKind::ClassicSqNorm) => (-4.0, 1.0),
            (Regime::Hard, RegularizerKind::ProductNorm) => (-4.0, 1.0),
        };
        log_space(lo, hi, 15)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Easy => "easy",
            Regime::Hard => "hard",
        }
    }
}

/// `count` points `10^lo … 10^hi`, evenly spaced in the exponent.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub anchors: Vec<Point>,
    pub coefficients: Vec<f64>,
}

impl Default for GroundTruth {
    /// `h = k_σ(1, ·) − k_σ(−1, ·)`.
    fn default() -> Self {
        Self {
            anchors: vec![vec![1.0], vec![-1.0]],
            coefficients: vec![1.0, -1.0],
        }
    }
}

/// Either one grid for every regularizer or one grid each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaGrid {
    Shared(Vec<f64>),
    PerRegularizer {
        classic: Vec<f64>,
        product: Vec<f64>,
    },
}

impl LambdaGrid {
    pub fn for_kind(&self, kind: RegularizerKind) -> &[f64] {
        match (self, kind) {
            (LambdaGrid::Shared(g), _) => g,
            (LambdaGrid::PerRegularizer { classic, .. }, RegularizerKind::ClassicSqNorm) => classic,
            (LambdaGrid::PerRegularizer { product, .. }, RegularizerKind::ProductNorm) => product,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sigma: f64,
    pub ground_truth: GroundTruth,
    pub population_size: usize,
    pub regime: Regime,
    /// Overrides the regime's training-set size.
    pub train_size: Option<usize>,
    /// Overrides the regime's label-noise variance.
    pub noise_var: Option<f64>,
    /// Defaults to [`Regime::default_grid`].
    pub lambda_grid: Option<LambdaGrid>,
    /// Defaults to [`Regime::default_trials`].
    pub trials: Option<usize>,
    pub seed: u64,
    pub regularizers: Vec<RegularizerKind>,
    pub fit: FitOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            ground_truth: GroundTruth::default(),
            population_size: 10_000,
            regime: Regime::Easy,
            train_size: None,
            noise_var: None,
            lambda_grid: None,
            trials: None,
            seed: 0,
            regularizers: vec![RegularizerKind::ClassicSqNorm, RegularizerKind::ProductNorm],
            fit: FitOptions::newton(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_regime(regime: Regime) -> Self {
        Self {
            regime,
            ..Self::default()
        }
    }

    pub fn train_size(&self) -> usize {
        self.train_size.unwrap_or_else(|| self.regime.train_size())
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var.unwrap_or_else(|| self.regime.noise_var())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or_else(|| self.regime.default_trials())
    }

    pub fn grid(&self, kind: RegularizerKind) -> Vec<f64> {
        match &self.lambda_grid {
            Some(g) => g.for_kind(kind).to_vec(),
            None => self.regime.default_grid(kind),
        }
    }

    pub fn kernel(&self) -> Result<GaussianKernel> {
        GaussianKernel::new(self.sigma)
    }

    pub fn ground_truth(&self) -> Result<RkhsFunction> {
        RkhsFunction::new(
            self.ground_truth.anchors.clone(),
            self.ground_truth.coefficients.clone(),
            self.kernel()?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.ground_truth()?;
        if h.dim() != 1 {
            return Err(Error::invalid(
                "ground_truth",
                "population points are one-dimensional",
            ));
        }
        if self.population_size == 0 {
            return Err(Error::invalid("population_size", "must be at least 1"));
        }
        let n = self.train_size();
        if n == 0 || n > self.population_size {
            return Err(Error::invalid(
                "train_size",
                format!("must lie in 1..={}, got {n}", self.population_size),
            ));
        }
        let noise = self.noise_var();
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::invalid(
                "noise_var",
                format!("must be >= 0, got {noise}"),
            ));
        }
        if self.trials() == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.regularizers.is_empty() {
            return Err(Error::invalid(
                "regularizers",
                "must name at least one regularizer",
            ));
        }
        for kind in &self.regularizers {
            let grid = self.grid(*kind);
            if grid.is_empty() {
                return Err(Error::invalid(
                    "lambda_grid",
                    format!("empty grid for `{}`", kind.as_str()),
                ));
            }
            if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::invalid(
                    "lambda_grid",
                    "values must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// One training set plus the population it was drawn from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub population: WeightedSample,
    pub train: RegressionProblem,
    /// Label noise actually added, aligned with `train`.
    pub noise: Vec<f64>,
}

/// The fixed population sample, drawn from stream 0 of the seed.
pub fn draw_population(config: &ExperimentConfig) -> Result<WeightedSample> {
    let mut rng = config.rng(0);
    let points = (0..config.population_size)
        .map(|_| vec![StandardNormal.sample(&mut rng)])
        .collect();
    WeightedSample::uniform(points)
}

/// Training set of trial `trial_index`, drawn from stream `trial_index + 1`.
pub fn draw_training(
    config: &ExperimentConfig,
    population: &WeightedSample,
    trial_index: usize,
) -> Result<(RegressionProblem, Vec<f64>)> {
    let h = config.ground_truth()?;
    let mut rng = config.rng(trial_index as u64 + 1);
    let picks = index::sample(&mut rng, population.len(), config.train_size());
    let noise_dist = Normal::new(0.0, config.noise_var().sqrt())
        .map_err(|e| Error::invalid("noise_var", e.to_string()))?;
    let mut xs = Vec::with_capacity(picks.len());
    let mut ys = Vec::with_capacity(picks.len());
    let mut noise = Vec::with_capacity(picks.len());
    for i in picks.iter() {
        let x = population.points()[i].clone();
        let e: f64 = noise_dist.sample(&mut rng);
        ys.push(h.evaluate(&x)? + e);
        noise.push(e);
        xs.push(x);
    }
    Ok((RegressionProblem::new(xs, ys, config.kernel()?)?, noise))
}

pub fn synthesize(config: &ExperimentConfig, trial_index: usize) -> Result<Dataset> {
    config.validate()?;
    let population = draw_population(config)?;
    let (train, noise) = draw_training(config, &population, trial_index)?;
    Ok(Dataset {
        population,
        train,
        noise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub regime: Regime,
    pub regularizer: RegularizerKind,
    pub lambda: f64,
    pub trial: usize,
    /// NaN when the fit failed outright.
    pub population_risk: f64,
    pub empirical_risk: f64,
    pub converged: bool,
}

fn run_trial(
    config: &ExperimentConfig,
    population: &WeightedSample,
    truth: &RkhsFunction,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let (train, _) = draw_training(config, population, trial)?;
    let train_sample = WeightedSample::uniform(train.train_x().to_vec())?;
    let mut out = Vec::new();
    for &kind in &config.regularizers {
        for lambda in config.grid(kind) {
            let fit = match kind {
                RegularizerKind::ClassicSqNorm => fit_classic(&train, lambda),
                RegularizerKind::ProductNorm => fit_product_norm(&train, lambda, &config.fit),
            };
            let record = match fit {
                Ok(fit) => TrialRecord {
                    regime: config.regime,
                    regularizer: kind,
                    lambda,
                    trial,
                    population_risk: risk(&fit.model, Target::Function(truth), population)?,
                    empirical_risk: risk(
                        &fit.model,
                        Target::Labels(train.train_y()),
                        &train_sample,
                    )?,
                    converged: fit.converged,
                },
                Err(_) => TrialRecord {
                    regime: config.regime,
                    regularizer: kind,
                    lambda,
                    trial,
                    population_risk: f64::NAN,
                    empirical_risk: f64::NAN,
                    converged: false,
                },
            };
            out.push(record);
        }
    }
    Ok(out)
}

/// Fits every (regularizer, λ, trial) combination. Records come back sorted by
/// regularizer, then λ, then trial, whatever the thread schedule.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let population = draw_population(config)?;
    let truth = config.ground_truth()?;
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..config.trials())
        .into_par_iter()
        .map(|t| run_trial(config, &population, &truth, t))
        .collect();
    let mut records = Vec::new();
    for r in per_trial {
        records.extend(r?);
    }
    records.sort_by(|a, b| {
        (a.regime, a.regularizer)
            .cmp(&(b.regime, b.regularizer))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub regime: Regime,
    pub regularizer: RegularizerKind,
    pub lambda: f64,
    pub mean_risk: f64,
    /// `None` with a single trial.
    pub stderr: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trials: usize,
}

impl SummaryRow {
    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    pub fn overlaps(&self, other: &SummaryRow) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

/// Mean population risk per (regime, regularizer, λ) over converged trials,
/// with a normal 95% interval `mean ± 1.96·stderr`. Groups without any
/// converged trial are omitted.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Regime, RegularizerKind, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.regime, r.regularizer, r.lambda.to_bits()))
            .or_default();
        if r.converged && r.population_risk.is_finite() {
            entry.push(r.population_risk);
        }
    }
    groups
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|((regime, regularizer, bits), mut values)| {
            // fixed summation order keeps the output schedule-independent
            values.sort_by(f64::total_cmp);
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let stderr = (count > 1).then(|| {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (count - 1) as f64;
                (var / count as f64).sqrt()
            });
            let half = stderr.map_or(0.0, |s| Z_95 * s);
            SummaryRow {
                regime,
                regularizer,
                lambda: f64::from_bits(bits),
                mean_risk: mean,
                stderr,
                ci_lo: mean - half,
                ci_hi: mean + half,
                trials: count,
            }
        })
        .collect()
}

/// Row with the lowest mean risk for one regularizer.
pub fn best_over_lambda(
    rows: &[SummaryRow],
    regime: Regime,
    kind: RegularizerKind,
) -> Option<&SummaryRow> {
    rows.iter()
        .filter(|r| r.regime == regime && r.regularizer == kind)
        .min_by(|a, b| a.mean_risk.total_cmp(&b.mean_risk))
}

/// Increase in mean risk from the best λ to λ/10, interpolating linearly in
/// `log λ` between grid points. `None` when λ/10 falls outside the grid.
pub fn underregularization_sensitivity(
    rows: &[SummaryRow],
    regime: Regime,
    kind: RegularizerKind,
) -> Option<f64> {
    let best = best_over_lambda(rows, regime, kind)?;
    let mut curve: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.regime == regime && r.regularizer == kind && r.lambda > 0.0)
        .map(|r| (r.lambda.ln(), r.mean_risk))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    if best.lambda <= 0.0 {
        return None;
    }
    let target = (best.lambda / 10.0).ln();
    let at = curve.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        (target >= x0 && target <= x1).then(|| y0 + (y1 - y0) * (target - x0) / (x1 - x0))
    })?;
    Some(at - best.mean_risk)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            population_size: 200,
            train_size: Some(20),
            trials: Some(3),
            lambda_grid: Some(LambdaGrid::Shared(vec![1e-3, 1e-1])),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_follow_regimes() {
        let e = ExperimentConfig::for_regime(Regime::Easy);
        assert_eq!(
            (e.train_size(), e.noise_var(), e.trials()),
            (1000, 1e-2, 100)
        );
        let h = ExperimentConfig::for_regime(Regime::Hard);
        assert_eq!(
            (h.train_size(), h.noise_var(), h.trials()),
            (100, 1.0, 1000)
        );
        assert_eq!(e.grid(RegularizerKind::ProductNorm).len(), 15);
        assert!(e.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = tiny();
        c.trials = Some(0);
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.lambda_grid = Some(LambdaGrid::Shared(vec![]));
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.noise_var = Some(-1.0);
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.train_size = Some(500);
        assert!(c.validate().is_err());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let c = tiny();
        let a = synthesize(&c, 2).unwrap();
        let b = synthesize(&c, 2).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.population, b.population);
        let other = synthesize(&c, 3).unwrap();
        assert_ne!(a.train, other.train);
    }

    #[test]
    fn training_points_come_from_population() {
        let c = tiny();
        let d = synthesize(&c, 0).unwrap();
        assert_eq!(d.train.len(), 20);
        for x in d.train.train_x() {
            assert!(d.population.points().contains(x));
        }
    }

    #[test]
    fn aggregate_single_and_identical() {
        let rec = |trial, risk| TrialRecord {
            regime: Regime::Easy,
            regularizer: RegularizerKind::ClassicSqNorm,
            lambda: 0.1,
            trial,
            population_risk: risk,
            empirical_risk: risk,
            converged: true,
        };
        let one = aggregate(&[rec(0, 0.5)]);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].stderr, None);
        assert_eq!(one[0].ci_lo, one[0].ci_hi);

        let same = aggregate(&[rec(0, 0.5), rec(1, 0.5), rec(2, 0.5)]);
        assert_eq!(same[0].ci_half_width(), 0.0);
        assert_eq!(same[0].trials, 3);
    }

    #[test]
    fn aggregate_drops_nonconverged() {
        let mut rows = vec![];
        for t in 0..4 {
            rows.push(TrialRecord {
                regime: Regime::Hard,
                regularizer: RegularizerKind::ProductNorm,
                lambda: 1.0,
                trial: t,
                population_risk: t as f64,
                empirical_risk: 0.0,
                converged: t != 1,
            });
        }
        let s = aggregate(&rows);
        assert_eq!(s[0].trials, 3);
        assert!((s[0].mean_risk - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn log_space_endpoints() {
        let g = log_space(-3.0, 1.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert!((g[4] - 10.0).abs() < 1e-12);
    }
}
