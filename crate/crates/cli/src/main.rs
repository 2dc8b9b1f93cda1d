use std::process::ExitCode;

use clap::Parser;
use tracing::Level;

use privshape_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.quiet { Level::WARN } else { Level::INFO })
        .with_target(false)
        .init();
    ExitCode::from(run(cli))
}
