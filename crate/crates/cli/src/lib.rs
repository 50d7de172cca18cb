//! The `clarify` command-line tool as a library, so tests can drive it
//! with in-memory standard streams.
//!
//! Exit codes: 0 on success (including `--help` and `--version`), 1 for
//! usage errors, 2 for runtime failures.

pub mod args;
pub mod commands;
pub mod config;
pub mod play;

use std::ffi::OsString;
use std::io::{BufRead, Write};

use clap::Parser;

pub use args::{Cli, Command, FLAG_REGISTRY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<clarify_core::Error> for CliError {
    fn from(e: clarify_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<clarify_core::harness::LogError> for CliError {
    fn from(e: clarify_core::harness::LogError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<clarify_core::estimator::EstimatorError> for CliError {
    fn from(e: clarify_core::estimator::EstimatorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn dispatch<I, T>(argv: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a, stdout, stderr),
        Command::Sweep(a) => commands::sweep(&a, stdout, stderr),
        Command::Calibrate(a) => commands::calibrate(&a, stdout),
        Command::Report(a) => commands::report(&a, stdout),
        Command::Play(a) => play::play(&a, stdin, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {}", msg.lines().next().unwrap_or_default());
            EXIT_RUNTIME
        }
    }
}
