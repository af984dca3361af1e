//! Parameter grids over experiment configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Compression, ExperimentConfig};
use super::outcome::{execute, RunOutcome};
use super::summary::{compression_label, summarize, Summary};
use crate::error::{Error, Result};
use crate::tasknet::Concentration;

/// Arrival rates, either listed or as an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaAxis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl LambdaAxis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaAxis::Values(v) => v.clone(),
            LambdaAxis::Range { start, stop, points } => linspace(*start, *stop, *points),
        }
    }
}

/// `points` evenly spaced values with both endpoints exact.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| {
                if i == points - 1 {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// Axes to vary; an absent axis keeps the template's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub concentration: Option<Vec<Concentration>>,
    pub lambda: Option<LambdaAxis>,
    pub width: Option<Vec<usize>>,
    pub supervisors: Option<Vec<usize>>,
    pub reporting_interval: Option<Vec<u64>>,
    pub noise_level: Option<Vec<f64>>,
    pub compression: Option<Vec<Compression>>,
    pub compression_degree: Option<Vec<u32>>,
    /// Overrides the template's trial count.
    pub trials: Option<usize>,
}

impl SweepAxes {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfiguration(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

fn axis<T: Clone>(values: &Option<Vec<T>>, default: T) -> Result<Vec<T>> {
    match values {
        Some(v) if v.is_empty() => Err(Error::InvalidConfiguration("sweep axes must not be empty".into())),
        Some(v) => Ok(v.clone()),
        None => Ok(vec![default]),
    }
}

/// Name of a cell, unique across the axes a sweep can vary.
pub fn cell_label(prefix: &str, cfg: &ExperimentConfig) -> String {
    let n = &cfg.network;
    let mut label = format!(
        "{prefix}-w{}-{}-l{:.3}-s{}",
        n.width, n.concentration, n.lambda, cfg.supervisors
    );
    if cfg.supervisors > 0 {
        label.push_str(&format!(
            "-k{}-n{:.2}-{}",
            cfg.reporting_interval,
            cfg.noise_level,
            compression_label(cfg.compression, cfg.compression_degree)
        ));
    }
    label
}

/// Expands the grid into one configuration per cell.
///
/// Sharing-only axes (interval, noise, compression) do not apply to
/// unsupervised cells, which are emitted once with the template's values.
pub fn expand(template: &ExperimentConfig, axes: &SweepAxes) -> Result<Vec<ExperimentConfig>> {
    let lambdas = match &axes.lambda {
        Some(l) => axis(&Some(l.values()), 0.0)?,
        None => vec![template.network.lambda],
    };
    let mut cells: Vec<ExperimentConfig> = Vec::new();
    for &concentration in &axis(&axes.concentration, template.network.concentration)? {
        for &lambda in &lambdas {
            for &width in &axis(&axes.width, template.network.width)? {
                for &supervisors in &axis(&axes.supervisors, template.supervisors)? {
                    for &k in &axis(&axes.reporting_interval, template.reporting_interval)? {
                        for &noise in &axis(&axes.noise_level, template.noise_level)? {
                            for &compression in &axis(&axes.compression, template.compression)? {
                                for &degree in &axis(&axes.compression_degree, template.compression_degree)? {
                                    let mut c = template.clone();
                                    c.network.concentration = concentration;
                                    c.network.lambda = lambda;
                                    c.network.width = width;
                                    c.supervisors = supervisors;
                                    if supervisors > 0 {
                                        c.reporting_interval = k;
                                        c.noise_level = noise;
                                        c.compression = compression;
                                        c.compression_degree = degree;
                                    }
                                    if let Some(t) = axes.trials {
                                        c.trials = t;
                                    }
                                    c.name = cell_label(&template.name, &c);
                                    c.validate()?;
                                    if !cells.iter().any(|e| e.name == c.name) {
                                        cells.push(c);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<RunOutcome>,
    pub summary: Summary,
}

/// Runs every cell of the grid (in parallel) and summarizes relative AUC
/// against the unsupervised cell of each environment.
pub fn sweep(template: &ExperimentConfig, axes: &SweepAxes, out: Option<&Path>) -> Result<SweepOutput> {
    let cells = expand(template, axes)?;
    let runs = execute(&cells, out)?;
    let summary = summarize(&runs);
    Ok(SweepOutput { runs, summary })
}
