use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmddro::{
    aggregate, discrete_adversary, fit_classic, fit_product_norm, krr_generalization_bound, mmd,
    radius, risk, run_sweep, ExperimentConfig, FitOptions, FitReport, GaussianKernel, NormBudgets,
    Radius, RegressionProblem, RegularizerKind, Target, WeightedSample,
};

mod io;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<mmddro::Error> for CliError {
    fn from(e: mmddro::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "mmddro",
    version,
    about = "MMD distributionally robust optimization toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MMD between two weighted samples, plus the concentration radius for the first.
    Mmd {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Worst-case reweighting of a loss column inside an MMD ball.
    Adversary {
        /// CSV with coordinate columns and a `loss` column.
        #[arg(long)]
        loss: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        epsilon: f64,
    },
    /// Kernel ridge regression generalization bound.
    Bound {
        #[arg(long)]
        empirical_risk: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        lambda_f2: f64,
        #[arg(long)]
        lambda_h2: f64,
        #[arg(long)]
        lambda_f: f64,
        #[arg(long)]
        lambda_h: f64,
    },
    /// Fit a Gaussian kernel ridge model.
    Fit {
        /// CSV with coordinate columns and a `y` column.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_parser = parse_regularizer)]
        regularizer: RegularizerKind,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = SolverArg::Newton)]
        solver: SolverArg,
        /// Optional held-out CSV in the same layout as `--train`.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Run a λ sweep and write records.csv and summary.csv.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Gd,
    Newton,
}

fn parse_regularizer(s: &str) -> Result<RegularizerKind, String> {
    s.parse().map_err(|e: mmddro::Error| e.to_string())
}

#[derive(Serialize)]
struct MmdOutput {
    mmd: f64,
    radius: Radius,
}

#[derive(Serialize)]
struct FitOutput {
    #[serde(flatten)]
    report: FitReport,
    empirical_risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_risk: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(1),
                CliError::Numerical(_) => ExitCode::from(2),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))
}

fn sample(path: &Path) -> Result<WeightedSample, CliError> {
    let table = io::read_table(path, &["weight"])?;
    Ok(match table.extra[0].clone() {
        Some(w) => WeightedSample::new(table.points, w)?,
        None => WeightedSample::uniform(table.points)?,
    })
}

fn labelled(path: &Path, kernel: GaussianKernel) -> Result<RegressionProblem, CliError> {
    let table = io::read_table(path, &["y"])?;
    let y = table.extra[0]
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{}: missing column `y`", path.display())))?;
    Ok(RegressionProblem::new(table.points, y, kernel)?)
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Mmd { a, b, sigma, delta } => {
            let kernel = GaussianKernel::new(sigma)?;
            let (p, q) = (sample(&a)?, sample(&b)?);
            let out = MmdOutput {
                mmd: mmd(&kernel, &p, &q)?,
                radius: radius(p.len(), delta, kernel.diagonal_bound())?,
            };
            to_json(&out)
        }
        Command::Adversary {
            loss,
            sigma,
            epsilon,
        } => {
            let kernel = GaussianKernel::new(sigma)?;
            let table = io::read_table(&loss, &["loss"])?;
            let values = table.extra[0].clone().ok_or_else(|| {
                CliError::Usage(format!("{}: missing column `loss`", loss.display()))
            })?;
            let gram = kernel.matrix(&table.points)?;
            to_json(&discrete_adversary(&values, &gram, epsilon)?)
        }
        Command::Bound {
            empirical_risk,
            n,
            delta,
            lambda_f2,
            lambda_h2,
            lambda_f,
            lambda_h,
        } => {
            let budgets = NormBudgets {
                lambda_f2,
                lambda_h2,
                lambda_f,
                lambda_h,
            };
            to_json(&krr_generalization_bound(
                empirical_risk,
                n,
                delta,
                budgets,
            )?)
        }
        Command::Fit {
            train,
            regularizer,
            lambda,
            sigma,
            solver,
            test,
        } => {
            let kernel = GaussianKernel::new(sigma)?;
            let problem = labelled(&train, kernel)?;
            let report = match regularizer {
                RegularizerKind::ClassicSqNorm => fit_classic(&problem, lambda)?,
                RegularizerKind::ProductNorm => {
                    let opts = match solver {
                        SolverArg::Gd => FitOptions::default(),
                        SolverArg::Newton => FitOptions::newton(),
                    };
                    fit_product_norm(&problem, lambda, &opts)?
                }
            };
            let train_sample = WeightedSample::uniform(problem.train_x().to_vec())?;
            let empirical_risk = risk(
                &report.model,
                Target::Labels(problem.train_y()),
                &train_sample,
            )?;
            let test_risk = match test {
                Some(path) => {
                    let held = labelled(&path, kernel)?;
                    let q = WeightedSample::uniform(held.train_x().to_vec())?;
                    Some(risk(&report.model, Target::Labels(held.train_y()), &q)?)
                }
                None => None,
            };
            to_json(&FitOutput {
                report,
                empirical_risk,
                test_risk,
            })
        }
        Command::Experiment {
            config,
            out,
            seed,
            threads,
        } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                if t == 0 {
                    return Err(CliError::Usage("--threads must be at least 1".into()));
                }
                pool = pool.num_threads(t);
            }
            let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
            let records = pool.install(|| run_sweep(&cfg))?;
            let summary = aggregate(&records);
            fs::create_dir_all(&out)
                .map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))?;
            io::write_file(&out.join("records.csv"), &io::records_csv(&records))?;
            io::write_file(&out.join("summary.csv"), &io::summary_csv(&summary))?;
            Ok(String::new())
        }
    }
}
