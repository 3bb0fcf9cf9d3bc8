mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use rdp_audit::Error;

use crate::args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::TrainingDiverged { .. }
                | Error::InsufficientSamples { .. }
                | Error::Direction { .. }
                | Error::Trial { .. } => 3,
                Error::Infeasible(_) | Error::Construction { .. } => 4,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

pub enum Outcome {
    Success,
    Reject,
    VerificationFailed,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let path = config::config_path(cli.config.as_deref());
    let path = path.as_deref();
    macro_rules! dispatch {
        ($args:expr, $section:literal, $cmd:path) => {{
            let file = config::load_section(path, $section)?;
            let (resolved, json) = config::resolve(&$args, file, $section)?;
            $cmd(resolved, json)
        }};
    }
    match cli.command {
        Command::Estimate(a) => dispatch!(a, "estimate", commands::estimate),
        Command::Audit(a) => dispatch!(a, "audit", commands::audit),
        Command::Simulate(a) => dispatch!(a, "simulate", commands::simulate),
        Command::Convert(a) => dispatch!(a, "convert", commands::convert),
        Command::Plan(a) => dispatch!(a, "plan", commands::plan),
        Command::MinimaxCheck(a) => dispatch!(a, "minimax-check", commands::minimax_check),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Reject) => ExitCode::from(10),
        Ok(Outcome::VerificationFailed) => ExitCode::from(5),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
