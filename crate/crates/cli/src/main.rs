//! `deblur`: blur synthesis, reconstruction, spectral diagnostics and evaluation.

mod args;
mod commands;
mod files;
mod problem;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Blur(a) => commands::blur(a),
        Command::Deblur(a) => commands::deblur(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Eval(a) => commands::eval(a),
        Command::Psf(a) => commands::psf(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
