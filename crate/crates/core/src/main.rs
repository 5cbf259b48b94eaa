use std::process::ExitCode;

use aoii::cli::{execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) if outcome.check_failed => {
            eprintln!(
                "check failed: sweep points {:?} outside tolerance",
                outcome.table.check_failures
            );
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
