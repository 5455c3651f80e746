mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "levy-exit",
    version,
    about = "Exit functionals, Skorohod metrics and exit-time Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML request file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for CSV files and the manifest.
    #[arg(long, global = true, default_value = "levy-exit-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Skorohod distance bracket between two path literals.
    Metric,
    /// Entrance times, points and continuity-set membership of a path.
    Entrance {
        /// Classify every recorded trajectory of a JSON-lines archive instead.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Simulate exits from one start point into a JSON-lines archive.
    Simulate,
    /// Monte Carlo value estimates at a list of points.
    Value,
    /// Pointwise residuals of a smooth candidate.
    Residual,
    /// Run a named experiment.
    Experiment { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
