use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leading_bench::config::Config;
use leading_bench::runner::{self, Summary};
use leading_bench::Result;

/// Exit code for a bound violation or a failed verification.
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "leading", version, about = "Run and verify leading prediction strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol from a TOML config and write trace.csv,
    /// diagnostics.csv and summary.json.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record wall-clock runtimes in the summary.
        #[arg(long)]
        timing: bool,
    },
    /// Replay a trace against its config.
    Verify { trace: PathBuf, config: PathBuf },
    /// Print a summary.json as a table.
    Report { summary: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out, timing } => {
            let config = Config::load(&config)?;
            let output = runner::run(config, timing)?;
            runner::write_outputs(&output, &out)?;
            print!("{}", runner::render_report(&output.summary));
            println!("wrote {}", out.display());
            Ok(output.summary.violations() == 0)
        }
        Command::Verify { trace, config } => {
            let config = Config::load(&config)?;
            let report = runner::verify(&trace, config)?;
            for p in &report.problems {
                println!("{p}");
            }
            if report.mismatches > report.problems.len() {
                println!("... {} more", report.mismatches - report.problems.len());
            }
            if report.ok() {
                println!(
                    "verified {} rounds{}",
                    report.rounds,
                    if report.diagnostics_checked { " and diagnostics" } else { "" }
                );
            } else {
                println!("verification failed: {} mismatches", report.mismatches);
            }
            Ok(report.ok())
        }
        Command::Report { summary } => {
            let s = Summary::load(&summary)?;
            print!("{}", runner::render_report(&s));
            Ok(true)
        }
    }
}
