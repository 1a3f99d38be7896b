use std::process::ExitCode;

use clap::Parser;
use race_dde_cli::error::{EXIT_OK, EXIT_USAGE};
use race_dde_cli::{run::run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("race-dde {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
