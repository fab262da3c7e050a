//! Command-line front end for the `vcrank` toolkit.
//!
//! [`run`] takes the full argument vector and returns the process exit code:
//! 0 on success, 1 for usage or validation errors, 2 for I/O failures.

mod args;
mod commands;
mod config;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// Environment variable holding the log filter (`error`, `info`, `debug`, ...).
pub const LOG_ENV: &str = "VCRANK_LOG";

pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();

    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::apply_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };

    let result = match cli.jobs {
        Some(0) => Err(vcrank::Error::invalid("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::dispatch(&cli)),
            Err(e) => Err(vcrank::Error::invalid(format!("cannot start {n} workers: {e}"))),
        },
        None => commands::dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &vcrank::Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}
