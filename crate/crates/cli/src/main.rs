mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use coral::CoralError;

use crate::args::{Cli, Command};
use crate::commands::Verdict;

fn run(cli: &Cli) -> anyhow::Result<Verdict> {
    match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Audit(a) => commands::audit_cmd(a),
        Command::Gradcheck(a) => commands::gradcheck_cmd(a),
        Command::Bound(a) => commands::bound_cmd(a),
        Command::Theorem1(a) => commands::theorem1_cmd(a),
        Command::GenData(a) => commands::gen_data_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            // numerical failures during a run are check failures, not usage errors
            let numeric = matches!(
                e.downcast_ref::<CoralError>(),
                Some(CoralError::Divergence { .. } | CoralError::NonFiniteGradient { .. })
            );
            ExitCode::from(if numeric { 1 } else { 2 })
        }
    }
}
