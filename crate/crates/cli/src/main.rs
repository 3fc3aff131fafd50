use std::process::ExitCode;

use clap::Parser;
use wavecool_cli::{execute, exit_code, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::BoundaryReached) => {
            eprintln!("stopped: a front reached the grid boundary (outputs written)");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
