mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inflate_core::error::InflateError;

use config::Emit;

#[derive(Parser, Debug)]
#[command(name = "inflate", version, about = "Norm-inflation experiments for semilinear Schrödinger equations")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out", global = true)]
    out: Option<PathBuf>,
    /// Outputs to write (csv, svg, jsonl).
    #[arg(long, global = true, value_delimiter = ',')]
    emit: Option<Vec<Emit>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScenarioFlags {
    /// Case id (see `inflate cases`).
    #[arg(long)]
    pub case: Option<String>,
    /// Dyadic N values, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Vec<u64>,
    /// Sobolev index (defaults to the case's own).
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Iterate depth.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Amplitude override.
    #[arg(long)]
    pub r: Option<f64>,
    /// Time override (excludes --rho).
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Hold ρ fixed by adjusting T.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Box side override.
    #[arg(long = "A")]
    pub a: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the Picard series for one case at each N.
    Run(ScenarioFlags),
    /// Run a case across N in parallel and fit the growth exponent.
    Sweep(ScenarioFlags),
    /// Norms of the initial datum.
    Norms(ScenarioFlags),
    /// Compare the truncated series with the reference solver.
    Compare {
        #[command(flatten)]
        scenario: ScenarioFlags,
        /// Retained frequencies |ξ| <= cutoff (defaults to the series support).
        #[arg(long)]
        cutoff: Option<usize>,
        /// Time steps over [0, T].
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Enumerate resonant tuples and check the quintic parametrization.
    Resonance {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        nu: Option<usize>,
        #[arg(long)]
        range: Option<i64>,
        /// Output frequency, one coordinate per direction.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        k: Vec<i64>,
    },
    /// The coefficient sequence a_k and the growth bound check.
    Sequence {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        /// Constant for the bound check.
        #[arg(long)]
        c: Option<f64>,
    },
    /// List the registered cases.
    Cases,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<InflateError>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn init_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("INFLATE_WORKERS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("INFLATE_WORKERS = `{v}` is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = init_workers().and_then(|_| commands::dispatch(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
