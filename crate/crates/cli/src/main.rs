mod cli;
mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use commands::Failure;
use config::FileConfig;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();

    let result = FileConfig::load(cli.config.as_deref())
        .map_err(Failure::Usage)
        .and_then(|cfg| match &cli.command {
            Command::Validate(a) => commands::validate(&cfg, a),
            Command::Stats(a) => commands::stats(&cfg, a),
            Command::Split(a) => commands::split(&cfg, a),
            Command::Train(a) => commands::train(&cfg, a),
            Command::Evaluate(a) => commands::evaluate(&cfg, a),
            Command::Predict(a) => commands::predict(&cfg, a),
            Command::Analyze(a) => commands::analyze(&cfg, a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
