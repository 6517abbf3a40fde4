mod args;
mod commands;
mod config;
mod error;
mod repl;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => commands::run(&cli.global, a),
        Command::Bench(a) => commands::bench(&cli.global, a),
        Command::Classify(a) => commands::classify(&cli.global, a),
        Command::Repl(a) => repl::repl(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
