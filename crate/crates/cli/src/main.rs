mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use commands::Verdict;

fn parse() -> Result<Cli, String> {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cmd = Cli::command();
    let lenient = cmd.clone().ignore_errors(true).try_get_matches_from(&argv);
    let argv = match lenient {
        Ok(m) => config::merged_args(&cmd, &argv, &m)?.unwrap_or(argv),
        Err(_) => argv,
    };
    let matches = cmd.try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    Cli::from_arg_matches(&matches).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Run(a) => commands::run(a),
        Command::Compare(a) => commands::compare(a),
        Command::Bench(a) => commands::bench(a),
    };
    match outcome {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
