mod commands;
mod config;
mod error;
mod io;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command, Settings};
use error::{CliError, Result};

fn run(cli: &Cli) -> Result<()> {
    let settings = Settings::load(cli.command.invocation())?;
    if let Some(n) = settings.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&settings),
        Command::Estimate(_) => commands::estimate(&settings),
        Command::Shape(_) => commands::shape(&settings),
        Command::Eval(_) => commands::eval(&settings),
        Command::Sweep(_) => commands::sweep(&settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
