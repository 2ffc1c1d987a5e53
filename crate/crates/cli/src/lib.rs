//! Command-line front end: `benchcut run | score | analyze | report | all`.

pub mod cli;
pub mod pipeline;

use std::ffi::OsString;

pub use cli::{parse_cli, CliError, Plan};
pub use pipeline::{run_pipeline, EXIT_FATAL, EXIT_OK, EXIT_PARTIAL};

/// Parses `argv` and runs it, returning the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_cli(argv) {
        Ok(plan) => run_pipeline(&plan),
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_FATAL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("benchcut: {e}");
            eprintln!("Try 'benchcut --help' for more information.");
            EXIT_FATAL
        }
    }
}
