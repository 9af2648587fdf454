use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgecache_cli::{run, CliError, Command, ExperimentConfig, VALIDATION_FAILURE};

/// Delay-optimal cooperative edge caching experiments.
#[derive(Parser)]
#[command(name = "edgecache", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Place content with one scheme and write per-file counts.
    Place,
    /// Compare schemes over a parameter sweep.
    Sweep,
    /// Evaluate cluster sizes, optionally across backhaul delays.
    Cluster,
    /// Check the per-rank rate bound by Monte Carlo simulation.
    Validate,
}

fn execute(cli: &Cli) -> Result<edgecache_cli::Report, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for assignment in &cli.set {
        config.apply_override(assignment)?;
    }
    let command = match cli.command {
        Cmd::Place => Command::Place,
        Cmd::Sweep => Command::Sweep,
        Cmd::Cluster => Command::Cluster,
        Cmd::Validate => Command::Validate,
    };
    let report = run(command, &config)?;
    match &cli.output {
        Some(path) => std::fs::write(path, &report.csv)?,
        None => std::io::stdout().write_all(report.csv.as_bytes())?,
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("{note}");
            }
            match report.failure {
                Some(reason) => {
                    eprintln!("validation failed: {reason}");
                    ExitCode::from(VALIDATION_FAILURE)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
