//! Report emission: summary tables, per-run curves and service-time plots.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use serde::Serialize;

use super::outcome::RunOutcome;
use super::summary::{summarize, CellSummary, Summary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Plots,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plots" => Ok(ReportFormat::Plots),
            other => Err(Error::InvalidConfiguration(format!(
                "unknown report format {other:?}, expected csv, json or plots"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Plots => "plots",
        })
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Flat form of [`CellSummary`] for CSV output.
#[derive(Serialize)]
struct CellRow<'a> {
    cell: &'a str,
    width: usize,
    concentration: String,
    lambda: f64,
    supervisors: usize,
    reporting_interval: u64,
    noise_level: f64,
    compression: &'a str,
    trials: usize,
    auc_median: f64,
    auc_mean: f64,
    auc_std: f64,
    baseline: &'a str,
    relative_auc: Option<f64>,
    ratio_mean: Option<f64>,
    ratio_std: Option<f64>,
    ratios: String,
    total_bytes_mean: f64,
}

impl<'a> From<&'a CellSummary> for CellRow<'a> {
    fn from(c: &'a CellSummary) -> Self {
        Self {
            cell: &c.cell,
            width: c.width,
            concentration: c.concentration.to_string(),
            lambda: c.lambda,
            supervisors: c.supervisors,
            reporting_interval: c.reporting_interval,
            noise_level: c.noise_level,
            compression: &c.compression,
            trials: c.trials,
            auc_median: c.auc_median,
            auc_mean: c.auc_mean,
            auc_std: c.auc_std,
            baseline: c.baseline.as_deref().unwrap_or(""),
            relative_auc: c.relative_auc,
            ratio_mean: c.ratio_mean,
            ratio_std: c.ratio_std,
            ratios: c.ratios.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(";"),
            total_bytes_mean: c.total_bytes_mean,
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct CurvePoint {
    step: usize,
    service_time: Option<f64>,
}

/// Writes the report for `runs` into `dir` and returns the files written.
///
/// - `csv`: `runs.csv`, `cells.csv` and `curves/<run_id>.csv` (one row per step).
/// - `json`: `summary.json`.
/// - `plots`: `plots/<cell>.svg`, every trial's service-time curve plus their mean.
pub fn emit_report(runs: &[RunOutcome], format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    make_dir(dir)?;
    let summary = summarize(runs);
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = dir.join("summary.json");
            let text = serde_json::to_string_pretty(&summary).map_err(|e| io_err(&path, e))?;
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let path = dir.join("runs.csv");
            write_csv(&path, &summary.runs)?;
            written.push(path);
            let path = dir.join("cells.csv");
            write_csv(&path, summary.cells.iter().map(CellRow::from))?;
            written.push(path);
            let curves = dir.join("curves");
            make_dir(&curves)?;
            for run in runs {
                let path = curves.join(format!("{}.csv", run.run_id));
                write_csv(
                    &path,
                    run.service.iter().enumerate().map(|(step, &service_time)| CurvePoint { step, service_time }),
                )?;
                written.push(path);
            }
        }
        ReportFormat::Plots => {
            let plots = dir.join("plots");
            make_dir(&plots)?;
            written.extend(write_plots(runs, &summary, &plots)?);
        }
    }
    Ok(written)
}

fn write_plots(runs: &[RunOutcome], summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut by_cell: BTreeMap<&str, Vec<&RunOutcome>> = BTreeMap::new();
    for r in runs {
        by_cell.entry(r.cell.as_str()).or_default().push(r);
    }
    let mut written = Vec::new();
    for cell in &summary.cells {
        let members = &by_cell[cell.cell.as_str()];
        let path = dir.join(format!("{}.svg", cell.cell));
        plot_cell(&path, &cell.cell, members).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn plot_cell(path: &Path, title: &str, runs: &[&RunOutcome]) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let steps = runs.iter().map(|r| r.service.len()).max().unwrap_or(0).max(1);
    let y_max = runs
        .iter()
        .flat_map(|r| r.service.iter().flatten())
        .fold(1.0f64, |m, &v| m.max(v))
        * 1.05;
    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0f64..steps as f64, 0f64..y_max)?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc("service time (steps)")
        .draw()?;
    for run in runs {
        let points = run.service.iter().enumerate().filter_map(|(t, v)| v.map(|v| (t as f64, v)));
        chart.draw_series(LineSeries::new(points, BLUE.mix(0.25)))?;
    }
    let mean: Vec<(f64, f64)> = (0..steps)
        .filter_map(|t| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.service.get(t).copied().flatten()).collect();
            (!vals.is_empty()).then(|| (t as f64, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect();
    chart.draw_series(LineSeries::new(mean, BLACK.stroke_width(2)))?;
    root.present()?;
    Ok(())
}
