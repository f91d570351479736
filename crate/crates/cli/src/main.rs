use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reservoir_cli::{invert::invert_spec, load_config, run_case, validate_monte_carlo, write_run, CliError};

#[derive(Parser)]
#[command(name = "cfcc", version, about = "Chance-constrained MPC of a three-lake reservoir system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop run and write the trace and summary files.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte-Carlo check of the flood and drought chance levels.
    Validate {
        config: PathBuf,
        #[arg(long)]
        runs: usize,
    },
    /// CDF and density of a distribution at one point.
    #[command(allow_negative_numbers = true)]
    Invert {
        /// e.g. "normal(0,1)" or "mix(0.5*normal(-2,1)+0.5*normal(2,1))".
        dist_spec: String,
        x: f64,
        /// Relative tolerance (absolute tolerance is tol/100).
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: String) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let trace = run_case(&cfg, seed)?;
            let (data, summary) = write_run(&cfg, seed, &trace, &out)?;
            let failed = trace.records.iter().filter(|r| matches!(r.status, cfcc_smpc::StepStatus::Failed(_))).count();
            if failed > 0 {
                eprintln!("warning: {failed} step(s) failed to solve; see {}", summary.display());
            }
            emit(format!("wrote {} and {}\n", data.display(), summary.display()));
        }
        Command::Validate { config, runs } => {
            let cfg = load_config(&config)?;
            emit(validate_monte_carlo(&cfg, runs)?.to_string());
        }
        Command::Invert { dist_spec, x, tol } => {
            emit(format!("{}\n", invert_spec(&dist_spec, x, tol)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
