//! Command-line front end: `generate`, `quantize`, `diagnose` and `sweep`.
//!
//! Settings are resolved in order: built-in defaults, then `--config`
//! file entries, then explicit flags. Every command writes the resolved
//! settings to `<out>.cfg`, which can be passed back through `--config`.
//!
//! Exit codes: 0 success, 1 I/O, 2 parse or configuration, 3 singular
//! Hessian or degenerate layer, 4 structural mismatch.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use config::{RunConfig, Settings};
pub use error::{CliError, CliResult, ExitKind};

/// Merges config file and flags for `command`.
pub fn resolve(command: &Command) -> CliResult<RunConfig> {
    let opts = command.options();
    let mut settings = match &opts.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    for (k, v) in opts.pairs() {
        settings.set(k, v);
    }
    RunConfig::resolve(command.name(), &settings)
}

pub fn execute(command: &Command) -> CliResult<()> {
    let cfg = resolve(command)?;
    match command {
        Command::Generate(_) => commands::generate(cfg),
        Command::Quantize(_) => commands::quantize(cfg),
        Command::Diagnose(_) => commands::diagnose(cfg),
        Command::Sweep(_) => sweep::sweep(cfg),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitKind::Config as i32 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
