//! Command-line front end for the experience-sharing simulator.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! failures while running or writing results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ctxshare::harness::{
    emit_report, execute, load_runs, summarize, sweep, ExperimentConfig, ReportFormat, RunOutcome, Summary,
    SweepAxes,
};

#[derive(Parser)]
#[command(name = "ctxshare", version, about = "Context-based experience sharing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of one experiment configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "CTXSHARE_OUT", default_value = "results")]
        out: PathBuf,
    },
    /// Run a parameter grid around a template configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axes: PathBuf,
        #[arg(long, env = "CTXSHARE_OUT", default_value = "results")]
        out: PathBuf,
    },
    /// Summarize previously written runs.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: ReportFormat,
        /// Where to write the report; defaults to the input directory.
        #[arg(long, env = "CTXSHARE_OUT")]
        out: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: ctxshare::Error| e.to_string())
}

/// Problems with the inputs rather than with running them.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<ctxshare::Error>(),
                Some(ctxshare::Error::InvalidConfiguration(_))
            )
    });
    if config {
        1
    } else {
        2
    }
}

fn print_summary(summary: &Summary) {
    println!(
        "{:<48} {:>6} {:>14} {:>10} {:>14}",
        "cell", "trials", "auc_median", "relative", "bytes_mean"
    );
    for c in &summary.cells {
        let relative = c.relative_auc.map_or("-".to_string(), |r| format!("{r:.3}"));
        println!(
            "{:<48} {:>6} {:>14.1} {:>10} {:>14.0}",
            c.cell, c.trials, c.auc_median, relative, c.total_bytes_mean
        );
    }
}

fn finish(runs: &[RunOutcome], out: &Path) -> Result<()> {
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        emit_report(runs, format, out).with_context(|| format!("writing {format} report"))?;
    }
    print_summary(&summarize(runs));
    println!("results in {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let runs = execute(std::slice::from_ref(&cfg), Some(&out))?;
            finish(&runs, &out)
        }
        Command::Sweep { config, axes, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axes = SweepAxes::load(&axes)?;
            let result = sweep(&cfg, &axes, Some(&out))?;
            finish(&result.runs, &out)
        }
        Command::Report { input, format, out } => {
            if !input.is_dir() {
                return Err(UsageError(format!("{} is not a directory", input.display())).into());
            }
            let runs = load_runs(&input)?;
            let out = out.unwrap_or(input);
            let written = emit_report(&runs, format, &out)?;
            println!("{} runs, {} files written to {}", runs.len(), written.len(), out.display());
            Ok(())
        }
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
