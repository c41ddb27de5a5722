mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "satiqc", version, about = "Mixed-IQC state-feedback synthesis for saturated uncertain plants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Problem definition (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file: result JSON for synth/factorize/analyze, CSV for sweep and simulate.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Parallel sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Solver primal/dual feasibility tolerance, overrides the config.
    #[arg(long, global = true)]
    pub feas_tol: Option<f64>,

    /// Solver relative duality gap, overrides the config.
    #[arg(long, global = true)]
    pub gap: Option<f64>,

    /// Seed for randomized scenarios.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// J-spectral factorization of one multiplier and its triangular form.
    Factorize {
        /// popov | zames_falb | sector
        multiplier: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Zames–Falb filter numerator, highest power first
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        filter_num: Option<Vec<f64>>,
        /// Zames–Falb filter denominator, highest power first
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        filter_den: Option<Vec<f64>>,
    },
    /// Controller synthesis for the configured design.
    Synth,
    /// Fixed-gain IQC analysis of a synthesized (or open) loop.
    Analyze {
        /// Result JSON from `synth`; the open loop is analyzed when omitted.
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// γ per IQC strategy across an α grid.
    Sweep {
        /// α values; defaults to the config's sweep list
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
    },
    /// Nonlinear simulation of a synthesized loop.
    Simulate {
        #[arg(long)]
        result: PathBuf,
        /// Scenario name from the config; the first one when omitted.
        #[arg(long)]
        scenario: Option<String>,
        /// Run this many random admissible scenarios (uses --seed) instead.
        #[arg(long)]
        random: Option<usize>,
        /// Horizon of random scenarios.
        #[arg(long, default_value_t = 20.0)]
        duration: f64,
        /// Summary JSON path; printed to stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError { code, msg }) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
