use std::process::ExitCode;

use clap::Parser;
use eitats_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(report) => {
            println!(
                "{}: wrote {} files to {} in {:.1} s",
                cli.command.name(),
                report.manifest.outputs.len() + 1,
                report.out_dir.display(),
                report.manifest.wall_clock_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("eitats: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
