//! File I/O, argument parsing and subcommands behind the `snrsub` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Runs one parsed invocation, writing its primary output.
pub fn run(cli: &Cli) -> CliResult<()> {
    use commands::*;

    match &cli.command {
        Command::Simulate(a) => {
            let m = simulate(a)?;
            emit(None, to_json(&m).as_bytes())
        }
        Command::Estimate(a) => {
            let r = estimate(a)?;
            emit(a.out.as_deref(), to_json(&r).as_bytes())
        }
        Command::SelectBlock(a) => {
            let r = select_block(a)?;
            if let Some(p) = &a.report {
                emit(Some(p), to_json(&r).as_bytes())?;
            }
            emit(a.out.as_deref(), select_block_csv(&r)?.as_bytes())
        }
        Command::Mc(a) => {
            let r = mc(a)?;
            if let Some(p) = &a.csv {
                emit(Some(p), mc_csv(&r)?.as_bytes())?;
            }
            emit(a.out.as_deref(), to_json(&r).as_bytes())
        }
        Command::Bandwidth(a) => emit(a.out.as_deref(), bandwidth_csv(&bandwidth(a)?).as_bytes()),
    }
}

/// Runs `cli` inside a pool of the requested size.
pub fn run_with_threads(cli: &Cli) -> CliResult<()> {
    match cli.threads {
        None => run(cli),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| run(cli)),
    }
}
