//! `coreg` command-line tool: CSV/JSON in, CSV/JSON/SVG artifacts out.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use coreg_core::Method;

use crate::config::Overrides;
use crate::error::{CliError, CliResult};

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: coreg_core::CoregError| e.to_string())
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|e| format!("'{s}': {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "coreg", version, about = "Co-expression network multivariate regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; replaces the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "coreg_out")]
    pub out: PathBuf,

    /// BH false discovery rate level.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Comma-separated λ values in (1, 2].
    #[arg(long = "lambda-grid", global = true, value_delimiter = ',', value_parser = parse_lambda)]
    pub lambda_grid: Option<Vec<f64>>,

    /// Comma-separated methods: CoReg, OLS, SvdFactor.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,

    /// Worker threads for replications.
    #[arg(long, global = true, env = "COREG_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit CoReg (and baselines) to a samples×columns CSV.
    Fit,
    /// Run simulation scenarios.
    Simulate {
        /// Bundled scenario set: paper_table1 or tiny.
        #[arg(long)]
        preset: Option<String>,
        /// Also write per-replication wall-clock timings.
        #[arg(long)]
        timing: bool,
    },
    /// Two-arm replicability experiment.
    Replicability {
        /// Bundled configuration: replicability_scenario1 or replicability_scenario2.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Residual co-expression modules only.
    Network,
    /// Runtime grids over p or n.
    Bench,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            alpha: self.alpha,
            lambda_grid: self.lambda_grid.clone(),
            methods: self.methods.clone(),
        }
    }
}

fn require_config(cli: &Cli, cmd: &str) -> CliResult<PathBuf> {
    cli.config
        .clone()
        .ok_or_else(|| CliError::usage(format!("{cmd} needs --config")))
}

/// Executes a parsed command and returns the artifacts written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // Fails only if a pool already exists (repeated in-process runs);
        // the existing pool is then reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let ov = cli.overrides();
    match &cli.command {
        Command::Fit => commands::cmd_fit(&require_config(cli, "fit")?, &ov, &cli.out),
        Command::Network => commands::cmd_network(&require_config(cli, "network")?, &ov, &cli.out),
        Command::Simulate { preset, timing } => {
            commands::cmd_simulate(cli.config.as_deref(), preset.as_deref(), *timing, &ov, &cli.out)
        }
        Command::Replicability { preset } => {
            commands::cmd_replicability(cli.config.as_deref(), preset.as_deref(), &ov, &cli.out)
        }
        Command::Bench => commands::cmd_bench(cli.config.as_deref(), &ov, &cli.out),
    }
}
