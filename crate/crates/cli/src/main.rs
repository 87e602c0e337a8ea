//! `spinclust`: gate synthesis, protocol runs, figure sweeps and checks.
//!
//! Exit status: 0 on success, 1 when a check fails (or a gate misses its
//! threshold), 2 on usage errors.

mod commands;
mod config;
mod figures;
mod output;
mod presets;
mod verify;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Bad flags, unknown presets and malformed config values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A check ran and failed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

#[derive(Parser, Debug)]
#[command(name = "spinclust", version, about = "Photonic cluster states from a spin-photon interface")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// System preset name.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a two-qubit gate into a dynamical-decoupling sequence.
    Synthesize(commands::SynthesizeArgs),
    /// Simulate the cluster-state protocol.
    Run(commands::RunArgs),
    /// Emit a figure sweep as CSV.
    Figure(figures::FigureArgs),
    /// Run the equivalence check and the invariant suite.
    Verify(verify::VerifyArgs),
    /// Photon-limited generation rate.
    Rate(commands::RateArgs),
    /// List the available presets.
    Presets,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionArg {
    Corrected,
    Postselect,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<spinclust::Error>() {
            if matches!(e, spinclust::Error::UnknownPreset(_) | spinclust::Error::Parse(_)) {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Run(a) => commands::run(a),
        Command::Figure(a) => figures::figure(a),
        Command::Verify(a) => verify::verify(a),
        Command::Rate(a) => commands::rate(a),
        Command::Presets => commands::list_presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
