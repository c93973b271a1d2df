//! The `specvid` command-line tool: scene synthesis, simulation,
//! reconstruction, evaluation, architecture comparison and cost reports.

pub mod cmd;
pub mod error;
pub mod inputs;
pub mod manifest;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result, EXIT_INPUT, EXIT_NUMERICAL};
pub use manifest::{read_manifest, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "specvid", version, about = "Spectral video compressive imaging toolkit")]
pub struct Cli {
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true, env = "SPECVID_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic moving scene to a cube file.
    Synth(cmd::synth::SynthArgs),
    /// Encode a scene into a measurement sequence.
    Simulate(cmd::simulate::SimulateArgs),
    /// Recover a cube from a measurement sequence.
    Reconstruct(cmd::reconstruct::ReconstructArgs),
    /// Score reconstructions against references.
    Evaluate(cmd::evaluate::EvaluateArgs),
    /// Simulate, reconstruct and score one scene under every architecture.
    CompareSystems(cmd::compare::CompareArgs),
    /// Attention cost report.
    Flops(cmd::flops::FlopsArgs),
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}"))),
        None => Ok(()),
    }
}

/// Runs the tool on `argv`, whose first element is the program name.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::usage(e.to_string()))?;
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Synth(a) => cmd::synth::run(a, &args),
        Command::Simulate(a) => cmd::simulate::run(a, &args),
        Command::Reconstruct(a) => cmd::reconstruct::run(a, &args),
        Command::Evaluate(a) => cmd::evaluate::run(a, &args),
        Command::CompareSystems(a) => cmd::compare::run(a, &args),
        Command::Flops(a) => cmd::flops::run(a, &args),
    }
}

/// Process entry point: parses `std::env::args`, reports errors on stderr
/// and maps them to exit codes.
pub fn main_entry() -> ExitCode {
    match Cli::try_parse() {
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
        Ok(_) => {}
    }
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
