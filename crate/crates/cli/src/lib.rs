//! Command-line tools and HTTP service around `relight-core`.
//!
//! [`run`] is the whole `relight` binary; it is exposed so tests can drive
//! commands in-process.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod render;
pub mod service;

use std::ffi::OsString;
use std::io::IsTerminal;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use crate::args::{Cli, Command};
pub use crate::error::{CliError, CliResult, ErrorKind};

pub const LOG_ENV: &str = "RELIGHT_LOG_LEVEL";

/// Installs the stderr logger once; later calls are no-ops. Timestamps are
/// only worth printing for the long-running service.
pub fn init_logging(default_level: &str, timestamps: bool) {
    let filter = EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new(default_level));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false);
    let _ = if timestamps {
        builder.try_init()
    } else {
        builder.without_time().try_init()
    };
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Image(a) => commands::image(a),
        Command::Video(a) => commands::video(a),
        Command::Eval(a) => commands::eval(a),
        Command::GenScenario(a) => commands::gen_scenario_cmd(a),
        Command::ShProject(a) => commands::sh_project(a),
        Command::Serve(a) => commands::serve(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr, as JSON with `--json-errors`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json_errors = args.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.render().to_string();
            let message = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return report(&CliError::usage(message), json_errors);
        }
    };
    let serving = matches!(cli.command, Command::Serve(_));
    init_logging(if serving { "info" } else { "warn" }, serving);
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e, cli.json_errors),
    }
}

fn report(e: &CliError, json: bool) -> i32 {
    if json {
        eprintln!("{}", e.to_json());
    } else {
        eprintln!("error: {e}");
    }
    e.exit_code()
}
