//! Command-line driver for the `gpca` library.

pub mod cli;
pub mod commands;
pub mod config;
pub mod synth;

use std::fs;

use gpca::{GpcaError, Result};

use crate::cli::{Cli, Command};

/// Resolves the configuration, runs the command and echoes the configuration
/// into the output directory.
pub fn run(mut cli: Cli) -> Result<()> {
    let kind = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Cov(_) => "cov",
        Command::Rolling(_) => "rolling",
        Command::Synth(_) => "synth",
    };
    let cfg = cli.run_config()?;
    if cfg.threads > 0 {
        // A second build in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(|e| GpcaError::Config(format!("cannot create {}: {e}", out.display())))?;
    match kind {
        "simulate" => commands::simulate(&cfg, out).map(|_| ()),
        "estimate" => commands::estimate(&cfg, out).map(|_| ()),
        "cov" => commands::cov(&cfg, out).map(|_| ()),
        "rolling" => commands::rolling(&cfg, out).map(|_| ()),
        _ => commands::synth(&cfg, out).map(|_| ()),
    }?;
    cfg.write_echo(out)
}
