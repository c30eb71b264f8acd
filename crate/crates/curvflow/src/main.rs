//! Thin command-line front end: parse arguments, load the configuration and
//! dispatch. Exit codes: 0 success, 2 validation, 3 numerical abort,
//! 4 no-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use curvflow::config::parse_config;
use curvflow::dispatch::{dispatch, Command, DispatchOptions};
use curvflow::report;

#[derive(Parser)]
#[command(
    name = "curvflow",
    about = "Volume-preserving curvature flows for spacelike graphs in Lorentzian ambient spaces",
    version
)]
struct Args {
    /// Subcommand: flow | cfc | foliate | stability | recover | check | oracle
    command: String,
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count for node-parallel sections.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Diagnostics cadence in steps (overrides the config).
    #[arg(long)]
    cadence: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match Command::parse(&args.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let mut config = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let opts = DispatchOptions {
        workers: args.workers.max(1),
        cadence: args.cadence,
    };
    match dispatch(command, &config, &opts) {
        Ok(()) => {
            println!(
                "{}: done, artifacts in {}",
                command.name(),
                config.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {e}", command.name());
            let _ = std::fs::create_dir_all(&config.output_dir);
            let _ = std::fs::write(config.output_dir.join("error.json"), report::error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
