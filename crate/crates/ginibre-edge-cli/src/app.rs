//! Argument parsing and the process-level driver.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ginibre_edge::limit_laws::DEFAULT_GRID_POINTS;

use crate::config::{
    AlphaList, Command, ConfigError, Format, GridSpec, LimitLaw, Numerics, Regime, RunConfig, StatisticArg, TailArg,
};
use crate::output::{render_csv, OutputDocument, Table};
use crate::run::{default_grid_spec, execute, selftest_failed, RunError, COARSE_GRID_POINTS};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "GINIBRE_EDGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ginibre-edge", version, about = "Edge statistics of products of Ginibre matrices")]
pub struct Cli {
    /// Worker threads (falls back to GINIBRE_EDGE_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Method for P(log Y_j ≥ t).
    #[arg(long, global = true, value_enum, default_value_t = TailArg::Auto)]
    pub tail: TailArg,

    /// Monte Carlo sample count for tails.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub samples: u64,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Fixed Fredholm truncation size (automatic when absent).
    #[arg(long, global = true)]
    pub truncation: Option<usize>,

    #[arg(long, global = true, default_value_t = 1e-13)]
    pub truncation_eps: f64,

    /// Initial Gauss–Legendre order per θ piece.
    #[arg(long, global = true, default_value_t = 64)]
    pub quad_order: usize,

    #[arg(long, global = true, default_value_t = 1e-16)]
    pub band_eps: f64,

    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Tabulate a limit law.
    Limit {
        #[arg(value_enum)]
        law: LimitLaw,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// lo:hi:count
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Exact finite-n distribution function.
    Finite {
        #[arg(value_enum)]
        statistic: StatisticArg,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Measured and predicted distance between finite-n and limit laws.
    Rate {
        #[arg(value_enum)]
        regime: Regime,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        /// Limit parameter for the fixed regime (defaults to n/k).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
    },
    /// Sample the spectral radius and report the KS distance to the exact law.
    Mc {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 200_000)]
        count: u64,
    },
    /// Φ_α and Φ̃_α over a list of α values.
    Scan {
        /// Comma-separated α values.
        #[arg(long)]
        alphas: AlphaList,
        #[arg(long, default_value = "-4:8:241", allow_hyphen_values = true)]
        grid: GridSpec,
    },
    /// Quick numerical checks.
    Selftest,
}

fn positive_alpha(alpha: Option<f64>) -> Result<f64, ConfigError> {
    match alpha {
        Some(a) if a.is_finite() && a > 0.0 => Ok(a),
        Some(a) => Err(ConfigError::Field {
            field: "alpha",
            detail: format!("{a} is not positive and finite"),
        }),
        None => Err(ConfigError::Field {
            field: "alpha",
            detail: "required".into(),
        }),
    }
}

/// Resolves defaults and validates.
pub fn build_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let run = match &cli.verb {
        Verb::Limit { law, alpha, grid } => {
            let (alpha, default) = match law {
                LimitLaw::PhiAlpha => {
                    let a = positive_alpha(*alpha)?;
                    (Some(a), default_grid_spec(a, DEFAULT_GRID_POINTS))
                }
                LimitLaw::Fredholm => {
                    let a = positive_alpha(*alpha)?;
                    (Some(a), default_grid_spec(a, COARSE_GRID_POINTS))
                }
                LimitLaw::Gumbel | LimitLaw::Normal => (
                    *alpha,
                    GridSpec {
                        lo: -10.0,
                        hi: 10.0,
                        count: DEFAULT_GRID_POINTS,
                    },
                ),
            };
            Command::Limit {
                law: *law,
                alpha,
                grid: grid.unwrap_or(default),
            }
        }
        Verb::Finite { statistic, n, k, grid } => {
            let count = match statistic {
                StatisticArg::Radius => DEFAULT_GRID_POINTS,
                StatisticArg::Rightmost => COARSE_GRID_POINTS,
            };
            let an = *n as f64 / (*k).max(1) as f64;
            Command::Finite {
                statistic: *statistic,
                n: *n,
                k: *k,
                grid: grid.unwrap_or_else(|| default_grid_spec(an, count)),
            }
        }
        Verb::Rate { regime, n, k, alpha } => {
            let alpha = match regime {
                Regime::Fixed => Some(alpha.unwrap_or(*n as f64 / (*k).max(1) as f64)),
                _ => *alpha,
            };
            Command::Rate {
                regime: *regime,
                n: *n,
                k: *k,
                alpha,
            }
        }
        Verb::Mc { n, k, count } => Command::Mc {
            n: *n,
            k: *k,
            count: *count,
        },
        Verb::Scan { alphas, grid } => Command::Scan {
            alphas: alphas.0.clone(),
            grid: *grid,
        },
        Verb::Selftest => Command::Selftest,
    };
    let cfg = RunConfig {
        version: ginibre_edge::VERSION.to_string(),
        run,
        numerics: Numerics {
            tail: cli.tail,
            samples: cli.samples,
            seed: cli.seed,
            truncation: cli.truncation,
            truncation_eps: cli.truncation_eps,
            quad_order: cli.quad_order,
            band_eps: cli.band_eps,
        },
        output: cli.output.as_ref().map(|p| p.display().to_string()),
        format: cli.format,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Renders a finished table in the configured format.
pub fn render(cfg: &RunConfig, table: &Table) -> String {
    match cfg.format {
        Format::Csv => render_csv(cfg, table),
        Format::Json => OutputDocument::new(cfg, table).to_json(),
    }
}

fn thread_count(cli: &Cli) -> Result<Option<usize>, ConfigError> {
    let from_env = || -> Result<Option<usize>, ConfigError> {
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v.trim().parse().map(Some).map_err(|_| ConfigError::Field {
                field: "threads",
                detail: format!("{THREADS_ENV} = {v:?}"),
            }),
            _ => Ok(None),
        }
    };
    let n = match cli.threads {
        Some(n) => Some(n),
        None => from_env()?,
    };
    if n == Some(0) {
        return Err(ConfigError::Field {
            field: "threads",
            detail: "must be at least 1".into(),
        });
    }
    Ok(n)
}

fn run_cli(cli: &Cli) -> Result<(), RunError> {
    if let Some(n) = thread_count(cli)? {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = build_config(cli)?;
    let table = execute(&cfg)?;
    let text = render(&cfg, &table);
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    match selftest_failed(&table) {
        0 => Ok(()),
        n => Err(RunError::SelftestFailed(n)),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
