mod args;
mod commands;
mod config;

use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use commands::Outcome;
use config::{apply, RunConfig};

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    apply(&mut cfg.seed, cli.seed.map(Some));
    apply(&mut cfg.workers, cli.workers.map(Some));
    match &cli.command {
        Command::Clip(a) => commands::clip(a, cfg),
        Command::Mix(a) => commands::mix(a, cfg),
        Command::Enrich(a) => commands::enrich(a, cfg),
        Command::Loss(a) => commands::loss(a, cfg),
        Command::Eval(c) => commands::eval(c, cfg),
        Command::Validate(a) => commands::validate(a, cfg),
    }
}

fn error_report(kind: &str, message: String) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_report("usage", e.to_string().trim_end().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.output).expect("JSON values serialize"));
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", error_report("runtime", format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
