use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = stone_cli::Cli::parse();
    match stone_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
