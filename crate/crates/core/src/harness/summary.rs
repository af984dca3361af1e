//! Aggregation of run outcomes into per-run and per-cell tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::auc::{curve_auc, service_floor};
use super::config::Compression;
use super::outcome::RunOutcome;
use crate::tasknet::{Concentration, METRIC_WINDOW};

/// Floors ignore steps before the first full metric window.
pub const FLOOR_FROM: u64 = METRIC_WINDOW;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub cell: String,
    pub trial: usize,
    pub seed: u64,
    pub config_hash: String,
    pub auc: f64,
    pub floor: f64,
    pub peak_service_time: f64,
    pub peak_step: u64,
    /// Mean service time over the last tenth of the run.
    pub final_service_time: f64,
    pub total_bytes: u64,
    pub share_bytes_per_step_per_subordinate: f64,
    pub bytes_per_step_per_supervisor: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub width: usize,
    pub concentration: Concentration,
    pub lambda: f64,
    pub supervisors: usize,
    pub reporting_interval: u64,
    pub noise_level: f64,
    pub compression: String,
    pub trials: usize,
    pub auc_median: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub baseline: Option<String>,
    /// Median AUC over the baseline's median AUC.
    pub relative_auc: Option<f64>,
    /// Per-trial AUC ratios against the baseline trial with the same index.
    pub ratios: Vec<f64>,
    pub ratio_mean: Option<f64>,
    pub ratio_std: Option<f64>,
    pub total_bytes_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub floor_from: u64,
    pub runs: Vec<RunSummary>,
    pub cells: Vec<CellSummary>,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn compression_label(c: Compression, degree: u32) -> String {
    match c {
        Compression::None => "none".into(),
        Compression::Lossless => "lossless".into(),
        Compression::Lossy => format!("lossy-r{degree}"),
    }
}

/// Runs sharing a floor: same lattice, source pattern, rate and horizon.
fn environment_key(o: &RunOutcome) -> (usize, Concentration, u64, u64) {
    let n = &o.config.network;
    (n.width, n.concentration, n.lambda.to_bits(), o.config.horizon)
}

fn peak(curve: &[Option<f64>]) -> (f64, u64) {
    curve
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (v, t as u64)))
        .fold((f64::NAN, 0), |best, cur| if best.0.is_nan() || cur.0 > best.0 { cur } else { best })
}

pub fn final_level(curve: &[Option<f64>]) -> f64 {
    let tail: Vec<f64> = curve[curve.len() - curve.len() / 10..].iter().flatten().copied().collect();
    mean(&tail)
}

/// Computes AUCs against per-environment floors and aggregates by cell.
///
/// The floor of a run is the lowest service time (from [`FLOOR_FROM`] on)
/// reached by any run in the same environment.
pub fn summarize(outcomes: &[RunOutcome]) -> Summary {
    let mut floors: BTreeMap<_, f64> = BTreeMap::new();
    for o in outcomes {
        if let Some(f) = service_floor([o.service.as_slice()], FLOOR_FROM) {
            let slot = floors.entry(environment_key(o)).or_insert(f);
            *slot = slot.min(f);
        }
    }
    let runs: Vec<RunSummary> = outcomes
        .iter()
        .map(|o| {
            let floor = floors.get(&environment_key(o)).copied().unwrap_or(0.0);
            let (peak_value, peak_step) = peak(&o.service);
            RunSummary {
                run_id: o.run_id.clone(),
                cell: o.cell.clone(),
                trial: o.trial,
                seed: o.config.network.seed,
                config_hash: o.config_hash.clone(),
                auc: curve_auc(&o.service, floor),
                floor,
                peak_service_time: peak_value,
                peak_step,
                final_service_time: final_level(&o.service),
                total_bytes: o.communication.total_bytes,
                share_bytes_per_step_per_subordinate: o.communication.share_bytes_per_step_per_subordinate,
                bytes_per_step_per_supervisor: o.communication.bytes_per_step_per_supervisor,
                wall_time_secs: o.wall_time_secs,
            }
        })
        .collect();

    let mut by_cell: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        by_cell.entry(o.cell.as_str()).or_default().push(i);
    }
    let mut cells: Vec<CellSummary> = by_cell
        .iter()
        .map(|(cell, idx)| {
            let cfg = &outcomes[idx[0]].config;
            let aucs: Vec<f64> = idx.iter().map(|&i| runs[i].auc).collect();
            let bytes: Vec<f64> = idx.iter().map(|&i| runs[i].total_bytes as f64).collect();
            CellSummary {
                cell: cell.to_string(),
                width: cfg.network.width,
                concentration: cfg.network.concentration,
                lambda: cfg.network.lambda,
                supervisors: cfg.supervisors,
                reporting_interval: cfg.reporting_interval,
                noise_level: cfg.noise_level,
                compression: compression_label(cfg.compression, cfg.compression_degree),
                trials: idx.len(),
                auc_median: median(&aucs),
                auc_mean: mean(&aucs),
                auc_std: sample_std(&aucs),
                baseline: None,
                relative_auc: None,
                ratios: Vec::new(),
                ratio_mean: None,
                ratio_std: None,
                total_bytes_mean: mean(&bytes),
            }
        })
        .collect();

    for c in 0..cells.len() {
        if cells[c].supervisors == 0 {
            continue;
        }
        let key = environment_key(&outcomes[by_cell[cells[c].cell.as_str()][0]]);
        let Some(b) = (0..cells.len()).find(|&b| {
            cells[b].supervisors == 0 && environment_key(&outcomes[by_cell[cells[b].cell.as_str()][0]]) == key
        }) else {
            continue;
        };
        let trial_auc = |cell: &str| -> BTreeMap<usize, f64> {
            by_cell[cell].iter().map(|&i| (runs[i].trial, runs[i].auc)).collect()
        };
        let base = trial_auc(&cells[b].cell);
        let own = trial_auc(&cells[c].cell);
        let ratios: Vec<f64> = own
            .iter()
            .filter_map(|(t, a)| base.get(t).filter(|&&b| b > 0.0).map(|b| a / b))
            .collect();
        let base_median = cells[b].auc_median;
        let base_name = cells[b].cell.clone();
        let cell = &mut cells[c];
        cell.baseline = Some(base_name);
        cell.relative_auc = (base_median > 0.0).then(|| cell.auc_median / base_median);
        cell.ratio_mean = (!ratios.is_empty()).then(|| mean(&ratios));
        cell.ratio_std = (!ratios.is_empty()).then(|| sample_std(&ratios));
        cell.ratios = ratios;
    }

    Summary {
        floor_from: FLOOR_FROM,
        runs,
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(sample_std(&[7.0]), 0.0);
    }

    #[test]
    fn final_level_uses_last_tenth() {
        let mut c = vec![Some(100.0); 90];
        c.extend(vec![Some(20.0); 10]);
        assert_eq!(final_level(&c), 20.0);
        assert_eq!(peak(&[None, Some(3.0), Some(9.0), Some(2.0)]), (9.0, 2));
    }

    #[test]
    fn empty_summary() {
        let s = summarize(&[]);
        assert!(s.runs.is_empty() && s.cells.is_empty());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Summary>(&json).unwrap(), s);
    }
}
