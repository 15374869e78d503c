//! The `shiftup` command line and its JSON HTTP service.

pub mod cli;
pub mod commands;
pub mod ops;
pub mod service;
pub mod view;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

pub use ops::{DomainFailure, LoopOverrides};

/// Parse arguments, run, and map the result onto the exit-code contract:
/// 0 ok, 1 domain failure, 2 environment failure.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.downcast_ref::<DomainFailure>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
