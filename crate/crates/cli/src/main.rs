use std::process::ExitCode;

use clap::Parser;
use tokendrop_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.run_config().and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
