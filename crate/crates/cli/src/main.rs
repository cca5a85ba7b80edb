//! Command-line experiments for critical Galton-Watson spine decompositions.
//!
//! Exit codes are a stable contract for CI use: 0 when the verification
//! passed, 1 when it ran but failed, 2 for invalid input.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "gwspine",
    about = "Critical Galton-Watson trees, spine decompositions, and their limit-theorem checks",
    version
)]
struct Cli {
    /// JSON experiment manifest; flags take precedence over its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed echoed into every output file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment; each overrides the config-file field
/// of the same name.
#[derive(Debug, Clone, Args, Default)]
struct CommonArgs {
    /// Offspring law as JSON: a weight list like `[0.5,0,0.5]` or a family
    /// object like `{"family":"geometric","truncate":50}`.
    #[arg(long)]
    offspring: Option<String>,

    /// Generation horizon.
    #[arg(long)]
    n: Option<usize>,

    /// λ grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,

    /// Monte Carlo run count.
    #[arg(long)]
    samples: Option<u64>,

    /// Verification tolerance on the command's headline gap.
    #[arg(long)]
    tolerance: Option<f64>,

    /// Significance level for hypothesis tests.
    #[arg(long)]
    significance: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact n·p_n·σ²/2 along a schedule of horizons; passes when the last
    /// value is within the tolerance of 1.
    Kolmogorov {
        #[command(flatten)]
        common: CommonArgs,
        /// Horizons, comma separated (falls back to --n).
        #[arg(long, value_delimiter = ',')]
        n_schedule: Option<Vec<usize>>,
    },
    /// Exact conditional transform vs the exponential limit, plus a
    /// conditioned Monte Carlo sample tested by Kolmogorov-Smirnov.
    Yaglom {
        #[command(flatten)]
        common: CommonArgs,
        /// Surviving-run target for the rejection sampler.
        #[arg(long)]
        target_survivors: Option<u64>,
    },
    /// Enumeration check of the one- and two-spine changes of measure
    /// against a battery of random bounded functionals.
    ChangeOfMeasure {
        #[command(flatten)]
        common: CommonArgs,
        /// Bias order: 1 for the X_n weighting, 2 for X_n(X_n-1).
        #[arg(long)]
        order: Option<u8>,
        /// Number of random functionals in the battery.
        #[arg(long)]
        functionals: Option<usize>,
    },
    /// Two-spine transform by decomposition, factorial moment, and Monte
    /// Carlo, on a λ grid.
    TwoSpine {
        #[command(flatten)]
        common: CommonArgs,
        /// Monte Carlo agreement band in standard errors.
        #[arg(long)]
        mc_sigma: Option<f64>,
    },
    /// The three exponential characterization equations for a law given as
    /// JSON, analytically and by two-sample tests.
    Characterize {
        #[command(flatten)]
        common: CommonArgs,
        /// Law under test, e.g. `{"kind":"exponential","mean":1.0}`.
        #[arg(long)]
        law: Option<String>,
    },
    /// Stream sampled populations (and optionally full trees) to disk.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Which process to sample: plain, spined, or two-spined.
        #[arg(long)]
        sampler: Option<String>,
        /// Also export full tree shapes as JSON (small n only).
        #[arg(long)]
        keep_trees: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification FAILED");
            ExitCode::from(1)
        }
        Err(message) => {
            eprintln!("invalid input: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(workers) = cli.workers {
        config.workers = Some(workers);
    }
    if let Some(out_dir) = cli.out_dir {
        config.out_dir = Some(out_dir);
    }

    match cli.command {
        Command::Kolmogorov { common, n_schedule } => {
            apply_common(&mut config, common)?;
            if let Some(schedule) = n_schedule {
                config.n_schedule = Some(schedule);
            }
            commands::kolmogorov(&config)
        }
        Command::Yaglom {
            common,
            target_survivors,
        } => {
            apply_common(&mut config, common)?;
            if let Some(t) = target_survivors {
                config.target_survivors = Some(t);
            }
            commands::yaglom(&config)
        }
        Command::ChangeOfMeasure {
            common,
            order,
            functionals,
        } => {
            apply_common(&mut config, common)?;
            if let Some(order) = order {
                config.order = Some(order);
            }
            if let Some(functionals) = functionals {
                config.functionals = Some(functionals);
            }
            commands::change_of_measure(&config)
        }
        Command::TwoSpine { common, mc_sigma } => {
            apply_common(&mut config, common)?;
            if let Some(s) = mc_sigma {
                config.mc_sigma = Some(s);
            }
            commands::two_spine(&config)
        }
        Command::Characterize { common, law } => {
            apply_common(&mut config, common)?;
            if let Some(text) = law {
                config.law =
                    Some(serde_json::from_str(&text).map_err(|e| format!("invalid law: {e}"))?);
            }
            commands::characterize(&config)
        }
        Command::Simulate {
            common,
            sampler,
            keep_trees,
        } => {
            apply_common(&mut config, common)?;
            if let Some(sampler) = sampler {
                config.sampler = Some(sampler);
            }
            if keep_trees {
                config.keep_trees = Some(true);
            }
            commands::simulate(&config)
        }
    }
}

fn apply_common(config: &mut ExperimentConfig, common: CommonArgs) -> Result<(), String> {
    if let Some(text) = common.offspring {
        config.offspring =
            Some(serde_json::from_str(&text).map_err(|e| format!("invalid offspring spec: {e}"))?);
    }
    if let Some(n) = common.n {
        config.n = Some(n);
    }
    if let Some(grid) = common.lambda_grid {
        config.lambda_grid = Some(grid);
    }
    if let Some(samples) = common.samples {
        config.samples = Some(samples);
    }
    if let Some(tolerance) = common.tolerance {
        config.tolerance = Some(tolerance);
    }
    if let Some(significance) = common.significance {
        config.significance = Some(significance);
    }
    Ok(())
}
