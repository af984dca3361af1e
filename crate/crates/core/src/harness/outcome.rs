//! Per-run results and their on-disk layout.
//!
//! A run directory `runs/<run_id>/` holds `run.json` (configuration and
//! totals), `metrics.csv` (one row per step), `ledger.csv` (one row per
//! message) and `windows.jsonl` (one sharing record per supervisor window).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, MetricsLog, StepRow};
use crate::error::{Error, Result};
use crate::transport::CommunicationSummary;

/// What later aggregation needs from one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub cell: String,
    pub trial: usize,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub generated: u64,
    pub completed: u64,
    pub wall_time_secs: f64,
    pub communication: CommunicationSummary,
    #[serde(skip)]
    pub service: Vec<Option<f64>>,
}

impl RunOutcome {
    pub fn from_log(log: &MetricsLog, cell: &str, trial: usize) -> Self {
        Self {
            run_id: format!("{cell}-t{trial}"),
            cell: cell.to_string(),
            trial,
            config_hash: log.config.hash(),
            config: log.config.clone(),
            generated: log.generated,
            completed: log.completed,
            wall_time_secs: log.wall_time_secs,
            communication: log.communication(),
            service: log.service_curve(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| io_err(path, e))?))
}

/// Writes the artifacts of one run below `dir/runs/`.
pub fn write_run(log: &MetricsLog, outcome: &RunOutcome, dir: &Path) -> Result<PathBuf> {
    let run_dir = dir.join("runs").join(&outcome.run_id);
    fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;

    let path = run_dir.join("run.json");
    serde_json::to_writer_pretty(create(&path)?, outcome).map_err(|e| io_err(&path, e))?;

    let path = run_dir.join("metrics.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    for row in &log.rows {
        w.serialize(row).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = run_dir.join("ledger.csv");
    log.ledger.write_csv(create(&path)?)?;

    let path = run_dir.join("windows.jsonl");
    let mut w = create(&path)?;
    for record in &log.windows {
        serde_json::to_writer(&mut w, record).map_err(|e| io_err(&path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(run_dir)
}

/// Reads every run stored below `dir/runs/`, ordered by run id.
pub fn load_runs(dir: &Path) -> Result<Vec<RunOutcome>> {
    let runs_dir = dir.join("runs");
    if !runs_dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(|e| io_err(&runs_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("run.json").is_file())
        .collect();
    dirs.sort();
    dirs.iter()
        .map(|d| {
            let path = d.join("run.json");
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let mut outcome: RunOutcome = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            let path = d.join("metrics.csv");
            let mut reader = csv::Reader::from_path(&path).map_err(|e| io_err(&path, e))?;
            outcome.service = reader
                .deserialize::<StepRow>()
                .map(|r| r.map(|r| r.service_time).map_err(|e| io_err(&path, e)))
                .collect::<Result<_>>()?;
            Ok(outcome)
        })
        .collect()
}

/// Runs every trial of every cell, in parallel, optionally persisting each
/// run under `out`. Results come back in cell order, then trial order.
pub fn execute(cells: &[ExperimentConfig], out: Option<&Path>) -> Result<Vec<RunOutcome>> {
    for cell in cells {
        cell.validate()?;
    }
    let jobs: Vec<(&ExperimentConfig, usize)> = cells
        .iter()
        .flat_map(|c| (0..c.trials).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(cell, i)| {
            let log = run_experiment(&cell.trial(i))?;
            let outcome = RunOutcome::from_log(&log, &cell.name, i);
            if let Some(dir) = out {
                write_run(&log, &outcome, dir)?;
            }
            Ok(outcome)
        })
        .collect()
}
