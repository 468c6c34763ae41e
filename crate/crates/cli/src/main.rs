use std::process::ExitCode;

use clap::Parser;
use steepfit_cli::{execute, report_json, write_artifacts, Cli, CliError};

fn main_inner() -> Result<(), CliError> {
    let config = Cli::parse().into_config()?;
    let (report, artifacts) = execute(&config)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    match &config.out {
        Some(dir) => {
            for path in write_artifacts(dir, &artifacts)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => print!("{}", report_json(&report)),
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
