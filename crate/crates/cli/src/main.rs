use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cmaxreg_cli::{run, CliError, Command, ConfigMap};

/// Contrast maximization with deformation-aware regularization.
#[derive(Debug, Parser)]
#[command(name = "cmaxreg", version)]
struct Args {
    /// One of: estimate, sweep, bench, synth, ttc.
    command: String,
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(args: Args) -> Result<(), CliError> {
    let command: Command = args.command.parse()?;
    let mut map = match &args.config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::default(),
    };
    for o in &args.overrides {
        map.apply_override(o)?;
    }
    run(command, map)
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
