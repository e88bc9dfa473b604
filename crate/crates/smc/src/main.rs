use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    smc::cli::run(smc::cli::Cli::parse())
}
