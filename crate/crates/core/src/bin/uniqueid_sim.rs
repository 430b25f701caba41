//! CLI front end: run scenarios, sweep attack frontiers, verify ledgers.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use uniqueid_core::cli;

#[derive(Parser)]
#[command(name = "uniqueid-sim")]
#[command(about = "Deterministic proof-of-unique-human protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write ledger.jsonl, metrics.csv, report.json.
    Run {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's epoch count.
        #[arg(long)]
        epochs: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep adversary collusion sizes and write frontier.csv plus per-k
    /// reports.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive collusion range, e.g. 3..10.
        #[arg(long)]
        sweep: String,
        /// Attack attempts shared by the sweep.
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Verify a ledger's hash chain, replay it, print the state hash.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
    },
}

fn main() -> ExitCode {
    cli::configure_threads();
    let args = Cli::parse();
    let code = match args.command {
        Command::Run { config, seed, epochs, out } => {
            cli::cmd_run(&config, seed, epochs, &out)
        }
        Command::Attack { config, sweep, trials, out } => {
            cli::cmd_attack(&config, &sweep, trials, &out)
        }
        Command::Verify { ledger } => cli::cmd_verify(&ledger),
    };
    ExitCode::from(code as u8)
}
