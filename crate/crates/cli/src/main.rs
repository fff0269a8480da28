use std::io;
use std::process::ExitCode;

use clap::Parser;
use coco_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stdout = io::stdout();
    match coco_cli::run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coco: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
