use std::process::ExitCode;

use clap::Parser;
use haulmap_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports bad arguments with status 2, help and version with 0
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            if let Some(m) = outcome.metrics {
                let offset = m.mean_offset.map_or("none".to_string(), |o| format!("{o:.3}"));
                println!(
                    "coverage {:.4} precision {:.4} mean_offset {offset}",
                    m.coverage, m.precision
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("haulmap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
