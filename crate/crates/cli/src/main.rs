//! Command-line front end for ultrametric covariance inference.
//!
//! Exit codes: 0 success, 1 domain violation (for example a matrix that is
//! not strictly ultrametric), 2 usage, configuration or I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{DomainError, Family, Format, InitKind, Metric};
use config::ConfigError;
use ultratree::ultrametric::DEFAULT_TOL;

#[derive(Parser)]
#[command(name = "ultratree", version, about = "Bayesian inference for ultrametric covariance matrices")]
struct Cli {
    /// Worker threads for chains and replicates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether a matrix CSV is strictly ultrametric.
    Validate {
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Convert between matrix CSV and Newick.
    Convert {
        input: PathBuf,
        #[arg(long, value_enum)]
        to: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Tree-space distance between two trees or matrices.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "sum")]
        metric: Metric,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run one or more posterior chains from a run config.
    Sample {
        config: PathBuf,
        #[arg(long)]
        chains: Option<usize>,
        /// Comma-separated start trees, one per chain.
        #[arg(long, value_delimiter = ',')]
        inits: Vec<PathBuf>,
        /// Start from a random tree or from an average-linkage fit to the data.
        #[arg(long, value_enum, default_value = "random")]
        init: InitKind,
        /// Archive path; overrides io.output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Posterior summaries of an archive, optionally scored against a truth.
    Summarize {
        archive: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 20)]
        mean_passes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        splits_csv: Option<PathBuf>,
    },
    /// Run a simulation scenario from a run config.
    Simulate {
        config: PathBuf,
        /// Run even when the estimated time exceeds the budget.
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = 1800.0)]
        max_seconds: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Frechet mean of an archive or of a file with one Newick tree per line.
    Mean {
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        passes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "sum")]
        metric: Metric,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        newick: Option<PathBuf>,
    },
    /// Draw a data set from a tree or matrix.
    Generate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "normal")]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Validate { matrix, tol } => commands::validate(&matrix, tol),
        Command::Convert { input, to, output, tol } => commands::convert(&input, to, output.as_deref(), tol),
        Command::Distance { a, b, metric, tol } => commands::distance(&a, &b, metric, tol),
        Command::Sample {
            config,
            chains,
            inits,
            init,
            output,
        } => commands::sample(commands::SampleArgs {
            config,
            chains,
            inits,
            init,
            output,
        }),
        Command::Summarize {
            archive,
            truth,
            level,
            mean_passes,
            seed,
            output,
            splits_csv,
        } => commands::summarize_cmd(commands::SummarizeArgs {
            archive,
            truth,
            level,
            mean_passes,
            seed,
            output,
            splits_csv,
        }),
        Command::Simulate {
            config,
            force,
            max_seconds,
            output,
            table,
        } => commands::simulate(commands::SimulateArgs {
            config,
            force,
            max_seconds,
            output,
            table,
        }),
        Command::Mean {
            input,
            passes,
            seed,
            metric,
            matrix,
            newick,
        } => commands::mean_cmd(commands::MeanArgs {
            input,
            passes,
            seed,
            metric,
            matrix,
            newick,
        }),
        Command::Generate {
            truth,
            n,
            family,
            seed,
            output,
        } => commands::generate(commands::GenerateArgs {
            truth,
            n,
            family,
            seed,
            output,
        }),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<DomainError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ultratree::Error>() {
            use ultratree::Error::*;
            return match e {
                NotUltrametric(_) | NotPositiveDefinite | Dimension { .. } | Data(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
