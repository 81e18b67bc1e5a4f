use std::process::ExitCode;

use clap::Parser;
use hcbm_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("hcbm: {e}");
            e.status.into()
        }
    }
}
