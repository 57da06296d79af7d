use std::process::ExitCode;

use clap::Parser;
use ruinbound::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
