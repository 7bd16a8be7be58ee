mod args;
mod commands;
mod error;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Design { design, out } => commands::design(&design, &out),
        Command::Verify(args) => commands::verify(&args),
        Command::Simulate { sim, out } => commands::simulate_cmd(&sim, &out),
        Command::Sweep { sweep, out } => commands::sweep(&sweep, &out),
        Command::HeatDemo { demo, out } => commands::heat_demo(&demo, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
