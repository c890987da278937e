mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Slow-fast hybrid predator-prey simulations, averaging and absorption analysis.
#[derive(Parser, Debug)]
#[command(name = "hybridavg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trajectories and write one CSV per (epsilon, seed).
    Simulate(Common),
    /// Monte Carlo comparison of the slow-fast and averaged models.
    Compare(Common),
    /// Absorption probability and mean absorption time of the averaged chain.
    Absorb(AbsorbArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// Run configuration; the bundled reference configuration when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Time-scale separation, repeatable; 0 selects the averaged model.
    #[arg(long = "epsilon", allow_negative_numbers = true)]
    pub epsilons: Vec<f64>,
    /// Seed, repeatable for `simulate`; falls back to HYBRIDAVG_SEED, then the config.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Monte Carlo replications per epsilon.
    #[arg(long)]
    pub reps: Option<u32>,
    /// Simulation horizon (observation time for `compare`).
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Worker threads for replications; 0 uses all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AbsorbArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial predator count, repeatable.
    #[arg(long = "m")]
    pub m: Vec<u64>,
    /// Series truncation tolerance.
    #[arg(long, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    /// Also solve the truncated linear system for the mean time.
    #[arg(long)]
    pub oracle: bool,
    /// Exit with status 2 when any series verdict is undetermined.
    #[arg(long)]
    pub strict: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Simulate(args) => commands::simulate(args, &mut out),
        Command::Compare(args) => commands::compare(args, &mut out),
        Command::Absorb(args) => commands::absorb(args, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("hybridavg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
