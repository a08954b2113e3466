mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "flagflow", version, about = "Ricci flow, realization and collapse experiments on three-summand flag manifolds")]
struct Cli {
    /// TOML file with default values for any switch.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

/// Switches shared by the commands that integrate the flow.
#[derive(Debug, Args, Clone, Default)]
pub struct FlowArgs {
    /// Flag family: `A:m,n,p`, `D:ell` or `E`.
    #[arg(long)]
    pub flag: Option<String>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Ricci field, projected field, F and grad F at a point.
    Field {
        #[command(flatten)]
        flow: FlowArgs,
        /// Point `x,y,z` (decimals or rationals such as 1/3).
        point: Option<String>,
    },
    /// Integrate the projected flow and write the trajectory as CSV.
    Flow {
        #[command(flatten)]
        flow: FlowArgs,
        /// Start point on the simplex (normalized if it does not sum to 1).
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduced-field vectors and trajectory endpoints on a grid of the simplex.
    Portrait {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate and classify the Einstein metrics.
    Equilibria {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        newton_tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Realize a metric in the cone as a torus pair via tau.
    Realize {
        /// Point `x,y,z` with F <= 0.
        point: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample an adjoint orbit in su(N)^2.
    Orbit {
        /// Flag used for the block sizes when `--blocks` is absent (A family only).
        #[arg(long)]
        flag: Option<String>,
        /// Block sizes `m,n,p`.
        #[arg(long)]
        blocks: Option<String>,
        /// Metric to realize via tau; alternative to `--h1`/`--h2`.
        #[arg(long)]
        point: Option<String>,
        /// ω-coordinates of H1.
        #[arg(long, allow_hyphen_values = true)]
        h1: Option<String>,
        /// ω-coordinates of H2.
        #[arg(long, allow_hyphen_values = true)]
        h2: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hausdorff distances to the limit orbit along a flow line, or the
    /// collapse verdict at a single point with `--at`.
    Collapse {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        x0: Option<String>,
        /// Check only the verdict at this boundary point.
        #[arg(long, conflicts_with = "x0")]
        at: Option<String>,
        /// Comma-separated sample times.
        #[arg(long)]
        times: Option<String>,
        #[arg(long)]
        t_limit: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV `t,x1,x2,x3,hausdorff`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON verdict with witness data.
        #[arg(long)]
        verdict_out: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Verify {
        /// Smaller sample sizes.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    let cfg = match cli.config.as_deref().map(ExperimentConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
