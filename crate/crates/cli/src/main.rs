//! `permembed`: plan, build and check permutation-invariant Euclidean embeddings.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage, domain or refusal error,
//! 3 a checked criterion failed under `--strict`.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CRITERION: u8 = 3;

/// Errors the user can fix by changing flags or inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<permembed::Error>() {
            return match e {
                permembed::Error::Inconsistent(_) => EXIT_INTERNAL,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_INTERNAL
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads.filter(|&t| t > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("permembed: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    match commands::dispatch(cli, argv) {
        Ok(passed) if passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_CRITERION),
        Err(e) => {
            eprintln!("permembed: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
