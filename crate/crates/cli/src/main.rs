//! `tlt`: synthetic data, pretext training, planar embedding, trajectory
//! fitting and rollout, evaluation and static plots.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for bad
//! input data. Results go to stdout, diagnostics to stderr.

mod args;
mod commands;
mod config;
mod error;
mod plot;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
