//! Area-under-curve performance: total excess of the service-time curve over
//! a floor, lower is better.

use super::run::MetricsLog;

/// `sum_t max(curve[t] - floor, 0)`, skipping steps without a measurement.
pub fn curve_auc(curve: &[Option<f64>], floor: f64) -> f64 {
    curve.iter().flatten().map(|&v| (v - floor).max(0.0)).sum()
}

pub fn compute_auc(log: &MetricsLog, floor: f64) -> f64 {
    curve_auc(&log.service_curve(), floor)
}

/// Smallest service time measured at or after step `from` on any curve.
pub fn service_floor<'a>(curves: impl IntoIterator<Item = &'a [Option<f64>]>, from: u64) -> Option<f64> {
    curves
        .into_iter()
        .flat_map(|c| c.iter().skip(from as usize).flatten().copied())
        .min_by(f64::total_cmp)
}
