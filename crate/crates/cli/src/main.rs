use std::process::ExitCode;

use clap::Parser;
use gpca_cli::cli::Cli;

fn main() -> ExitCode {
    match gpca_cli::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
