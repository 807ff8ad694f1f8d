//! `tobitl` — two-stage L-estimation for left-censored regression with an
//! endogenous regressor.
//!
//! Subcommands: `fit` (estimate on a CSV dataset with HAC confidence
//! intervals), `simulate` (Monte Carlo bias/MSE study), `bootstrap`
//! (replicate RMSE of the estimates). Every run writes a `run_config.json`
//! echo sufficient to reproduce it exactly.
//!
//! Exit codes: 0 success, 2 data error, 3 numerical failure, 4 bad
//! configuration.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tobitl::bootstrap::{bootstrap_brmse, BootstrapConfig, ResampleScheme};
use tobitl::cqr::{CqrOptions, QuantileGrid};
use tobitl::error::{Error, ErrorCategory};
use tobitl::inference::HacKernel;
use tobitl::lweights::WeightSpec;
use tobitl::model::{validate_dataset, Dataset, Schema, Table};
use tobitl::simulate::{run_monte_carlo, SimConfig};

#[derive(Parser)]
#[command(name = "tobitl", version, about = "Two-stage L-estimation for censored regression with endogeneity", long_about = None)]
struct Cli {
    /// Worker threads (0 = auto). Falls back to TOBITL_THREADS; 1 is the
    /// bit-reproducibility reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "tobitl-out")]
    out: PathBuf,

    #[arg(long, global = true, default_value_t = false)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the two-stage model on a CSV dataset and report L-estimates with
    /// HAC confidence intervals.
    Fit(FitArgs),
    /// Monte Carlo study of empirical bias and MSE over a list of sample
    /// sizes.
    Simulate(SimArgs),
    /// Bootstrap root-mean-squared-error assessment on observed data.
    Bootstrap(BootArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV data file (UTF-8, header row).
    #[arg(long)]
    data: PathBuf,
    /// JSON schema mapping column roles:
    /// {"response":..., "exogenous":[...], "endogenous":..., "instrument":...}
    #[arg(long)]
    schema: PathBuf,
    /// Weight measure, repeatable: trimmed:A | winsorized:A | parabolic |
    /// point:T | smoothq:PI,H
    #[arg(long = "weight", required = true)]
    weights: Vec<String>,
    /// Quantile grid as "tau0,m" (default "0.05,99").
    #[arg(long)]
    grid: Option<String>,
    /// HAC smoothing bandwidth (default: residual scale times n^(-1/3)).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// HAC lag truncation (default: floor((4n/100)^(1/3)), at least 1).
    #[arg(long = "lag-trunc")]
    lag_trunc: Option<usize>,
    /// HAC kernel (only "bartlett").
    #[arg(long, default_value = "bartlett")]
    kernel: String,
    /// Confidence level for the intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Master seed for the multi-start optimizer.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multi-start count for the censored fit.
    #[arg(long, default_value_t = 5)]
    starts: usize,
}

#[derive(Args)]
struct SimArgs {
    /// Comma-separated sample sizes, e.g. "50,100,500,1000".
    #[arg(long = "n-list", default_value = "50,100,500,1000")]
    n_list: String,
    /// Replications per sample size.
    #[arg(long, default_value_t = 200)]
    r: usize,
    /// Master seed (required; there is no wall-clock seeding).
    #[arg(long)]
    seed: Option<u64>,
    /// Weight measure, repeatable (default: the three worked examples).
    #[arg(long = "weight")]
    weights: Vec<String>,
    /// Quantile grid as "tau0,m" (default "0.01,99").
    #[arg(long)]
    grid: Option<String>,
    /// True coefficients "b0,b1,b2,rho1".
    #[arg(long = "beta-true", default_value = "1,2,3,0.5")]
    beta_true: String,
    /// AR(1) coefficient of the persistent error.
    #[arg(long = "rho-star", default_value_t = 0.5)]
    rho_star: f64,
    /// Innovation standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// First-stage slope on the instrument.
    #[arg(long = "delta-tilde", default_value_t = 1.0)]
    delta_tilde: f64,
    /// Draw the instrument once and reuse it across replicates.
    #[arg(long = "fixed-z", default_value_t = false)]
    fixed_z: bool,
    /// Integrate with M uniform draws instead of the midpoint rule.
    #[arg(long = "mc-draws")]
    mc_draws: Option<usize>,
    /// Multi-start count for the censored fit.
    #[arg(long, default_value_t = 5)]
    starts: usize,
}

#[derive(Args)]
struct BootArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Weight measure (single).
    #[arg(long)]
    weight: String,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 200)]
    b: usize,
    /// Resampling scheme: iid_pairs | moving_block[:len] | identity.
    #[arg(long, default_value = "iid_pairs")]
    scheme: String,
    /// Master seed (required; there is no wall-clock seeding).
    #[arg(long)]
    seed: Option<u64>,
    /// Quantile grid as "tau0,m" (default "0.05,99").
    #[arg(long)]
    grid: Option<String>,
    /// Multi-start count for the censored fit.
    #[arg(long, default_value_t = 5)]
    starts: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(4);
        }
    };
    env_logger::Builder::from_default_env()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.category() {
                ErrorCategory::Data => 2,
                ErrorCategory::Numerical => 3,
                ErrorCategory::Config => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn threads_from(cli_threads: Option<usize>) -> usize {
    cli_threads.unwrap_or_else(|| {
        std::env::var("TOBITL_THREADS").ok().and_then(|v| v.parse().ok()).unwrap_or(0)
    })
}

fn parse_grid(spec: Option<&str>, default_tau0: f64, default_m: usize) -> Result<QuantileGrid, Error> {
    match spec {
        None => QuantileGrid::equispaced(default_tau0, default_m),
        Some(s) => {
            let parts: Vec<&str> = s.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::InvalidParameter {
                    name: "grid".into(),
                    reason: "expected \"tau0,m\"".into(),
                });
            }
            let tau0: f64 = parts[0].parse().map_err(|_| Error::InvalidParameter {
                name: "grid".into(),
                reason: "tau0 is not a number".into(),
            })?;
            let m: usize = parts[1].parse().map_err(|_| Error::InvalidParameter {
                name: "grid".into(),
                reason: "m is not an integer".into(),
            })?;
            QuantileGrid::equispaced(tau0, m)
        }
    }
}

fn parse_weights(specs: &[String]) -> Result<Vec<WeightSpec>, Error> {
    specs.iter().map(|s| s.parse::<WeightSpec>()).collect()
}

fn parse_kernel(s: &str) -> Result<HacKernel, Error> {
    match s {
        "bartlett" => Ok(HacKernel::Bartlett),
        other => Err(Error::InvalidParameter {
            name: "kernel".into(),
            reason: format!("unknown kernel `{other}` (only bartlett)"),
        }),
    }
}

fn load_dataset(data: &PathBuf, schema: &PathBuf) -> Result<(Dataset, Schema), Error> {
    let schema = Schema::from_json_path(schema)?;
    let table = Table::from_csv_path(data)?;
    let d = validate_dataset(&table, &schema)?;
    Ok((d, schema))
}

fn run(cli: Cli) -> Result<(), Error> {
    std::fs::create_dir_all(&cli.out)?;
    let threads = threads_from(cli.threads);
    match cli.command {
        Command::Fit(args) => {
            let (d, schema) = load_dataset(&args.data, &args.schema)?;
            let weights = parse_weights(&args.weights)?;
            let grid = parse_grid(args.grid.as_deref(), 0.05, 99)?;
            let kernel = parse_kernel(&args.kernel)?;
            if !(args.level > 0.0 && args.level < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "level".into(),
                    reason: "must lie in (0, 1)".into(),
                });
            }
            let cqr = CqrOptions { starts: args.starts, seed: args.seed, ..Default::default() };
            output::run_fit(
                &cli.out,
                &d,
                &schema,
                &weights,
                &grid,
                &cqr,
                args.bandwidth,
                args.lag_trunc,
                kernel,
                args.level,
                args.seed,
            )
        }
        Command::Simulate(args) => {
            let seed = args.seed.ok_or_else(|| Error::InvalidParameter {
                name: "seed".into(),
                reason: "--seed is required for simulate (no wall-clock seeding)".into(),
            })?;
            if args.r == 0 {
                return Err(Error::InvalidParameter {
                    name: "r".into(),
                    reason: "at least one replication required".into(),
                });
            }
            let n_list: Vec<usize> = args
                .n_list
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| Error::InvalidParameter {
                        name: "n-list".into(),
                        reason: format!("`{s}` is not an integer"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let beta: Vec<f64> = args
                .beta_true
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| Error::InvalidParameter {
                        name: "beta-true".into(),
                        reason: format!("`{s}` is not a number"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if beta.len() != 4 {
                return Err(Error::InvalidParameter {
                    name: "beta-true".into(),
                    reason: "expected four values b0,b1,b2,rho1".into(),
                });
            }
            let weights = if args.weights.is_empty() {
                // the three worked examples
                vec![
                    "trimmed:0.01".parse::<WeightSpec>()?,
                    "winsorized:0.01".parse::<WeightSpec>()?,
                    "parabolic".parse::<WeightSpec>()?,
                ]
            } else {
                parse_weights(&args.weights)?
            };
            let grid = parse_grid(args.grid.as_deref(), 0.01, 99)?;

            let mut runs = Vec::new();
            for &n in &n_list {
                let mut cfg = SimConfig::new(n, args.r, seed, weights.clone());
                cfg.grid = grid.clone();
                cfg.beta_true = [beta[0], beta[1], beta[2], beta[3]];
                cfg.rho_star = args.rho_star;
                cfg.sigma = args.sigma;
                cfg.delta_tilde = args.delta_tilde;
                cfg.fixed_z = args.fixed_z;
                cfg.mc_draws = args.mc_draws;
                cfg.starts = args.starts;
                cfg.threads = threads;
                cfg.validate()?;
                log::info!("simulate: n = {n}, r = {}", args.r);
                runs.push((cfg.clone(), run_monte_carlo(&cfg)?));
            }
            output::write_simulation(&cli.out, &runs)
        }
        Command::Bootstrap(args) => {
            let seed = args.seed.ok_or_else(|| Error::InvalidParameter {
                name: "seed".into(),
                reason: "--seed is required for bootstrap (no wall-clock seeding)".into(),
            })?;
            let (d, schema) = load_dataset(&args.data, &args.schema)?;
            let weight = args.weight.parse::<WeightSpec>()?;
            let scheme = ResampleScheme::parse(&args.scheme, d.n())?;
            let mut cfg = BootstrapConfig::new(args.b, scheme, seed, weight);
            cfg.grid = parse_grid(args.grid.as_deref(), 0.05, 99)?;
            cfg.starts = args.starts;
            cfg.threads = threads;
            let report = bootstrap_brmse(&d, &cfg)?;
            output::write_bootstrap(&cli.out, &d, &schema, &cfg, &report)
        }
    }
}
