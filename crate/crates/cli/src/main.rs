use std::process::ExitCode;

use clap::Parser;
use softcrowd_cli::args::{Cli, Command};
use softcrowd_cli::UsageError;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let json = cli.json;
    let result = match &cli.command {
        Command::Serve(a) => softcrowd_cli::serve(a, &argv).map(|_| None),
        _ => softcrowd_cli::execute(cli.command, &argv).map(Some),
    };
    match result {
        Ok(Some(report)) => {
            print!("{}", report.render(json));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
