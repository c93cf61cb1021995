use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    seboost_cli::main_with(seboost_cli::Cli::parse())
}
