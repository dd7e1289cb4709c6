//! Host simulator and command-line tooling for `streamwrap`.
//!
//! Every command is a plain function over writers so tests can drive it in
//! process; `main` only maps the result to an exit code.

pub mod args;
pub mod commands;
pub mod procs;
pub mod sim;
pub mod table;
pub mod wav;

use std::io::Write;

use clap::Parser;
use streamwrap::AdaptError;

pub use args::{Cli, Command};
pub use sim::{simulate, Scenario, Schedule, SegmentReport, SimReport};
pub use table::{delay_table, DelayRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Verify(_) => EXIT_VERIFY,
            Self::Config(_) => EXIT_CONFIG,
            Self::Io(_) => EXIT_IO,
        }
    }
}

impl From<AdaptError> for CliError {
    fn from(e: AdaptError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<hound::Error> for CliError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(e) => Self::Io(e.to_string()),
            other => Self::Io(format!("WAV: {other}")),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
