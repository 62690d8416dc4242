use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use gscatter_cli::cli::Cli;
use gscatter_cli::{run, CliError, Context};

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    // read once, before any work
    let ctx = match Context::from_env() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::usage(e.to_string().trim_end().to_string())),
    };
    let result = cli
        .into_config()
        .and_then(|cfg| run(&cfg, &ctx, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
