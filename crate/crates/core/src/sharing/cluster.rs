//! K-means in a whitened space with gap-statistic model selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Upper bound on the number of clusters (further capped by `n - 1`).
    pub k_max: usize,
    /// Uniform reference datasets per candidate `k`.
    pub references: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            references: 20,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Pooled within-cluster sum of squared distances.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Lloyd iterations from a k-means++ seeding.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, cfg: &ClusterConfig, rng: &mut R) -> KMeansFit {
    let n = points.len();
    assert!(k >= 1 && k <= n, "k must lie in 1..=n");
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centroids.push(points[idx].clone());
        let c = centroids.last().unwrap();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p, c));
        }
    }

    let dim = points[0].len();
    let mut assignments = vec![0usize; n];
    for _ in 0..cfg.max_iterations {
        for (a, p) in assignments.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assignments.iter().zip(points) {
            counts[*a] += 1;
            for (s, v) in sums[*a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let next = if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[assignments[i]]);
                        let dj = sq_dist(&points[j], &centroids[assignments[j]]);
                        di.total_cmp(&dj)
                    })
                    .unwrap();
                points[far].clone()
            } else {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            };
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < cfg.tolerance {
            break;
        }
    }
    let mut inertia = 0.0;
    for (a, p) in assignments.iter_mut().zip(points) {
        let (c, d) = nearest(p, &centroids);
        *a = c;
        inertia += d;
    }
    KMeansFit {
        assignments,
        centroids,
        inertia,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSelection {
    pub k: usize,
    /// `Gap(k)` for each evaluated `k`, starting at 1.
    pub gaps: Vec<f64>,
    /// Simulation error `s_k` for each evaluated `k`.
    pub errors: Vec<f64>,
    pub fit: KMeansFit,
}

fn log_inertia(w: f64) -> f64 {
    w.max(1e-300).ln()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

/// Picks the smallest `k` with `Gap(k) >= Gap(k + 1) - s_{k + 1}`, using
/// reference sets drawn uniformly over the data's bounding box.
pub fn select_k<R: Rng + ?Sized>(points: &[Vec<f64>], cfg: &ClusterConfig, rng: &mut R) -> GapSelection {
    let n = points.len();
    let k_cap = cfg.k_max.min(n.saturating_sub(1)).min(distinct_count(points)).max(1);
    let single = kmeans(points, 1, cfg, rng);
    if k_cap == 1 || single.inertia <= 0.0 {
        return GapSelection {
            k: 1,
            gaps: vec![0.0],
            errors: vec![0.0],
            fit: single,
        };
    }
    let dim = points[0].len();
    let lo: Vec<f64> = (0..dim).map(|c| points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..dim).map(|c| points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let b = cfg.references.max(1);
    let references: Vec<Vec<Vec<f64>>> = (0..b)
        .map(|_| {
            (0..n)
                .map(|_| (0..dim).map(|c| lo[c] + rng.random::<f64>() * (hi[c] - lo[c])).collect())
                .collect()
        })
        .collect();

    let mut gaps = Vec::new();
    let mut errors = Vec::new();
    let mut fits = Vec::new();
    let evaluate = |k: usize, rng: &mut R| {
        let fit = if k == 1 { single.clone() } else { kmeans(points, k, cfg, rng) };
        let logs: Vec<f64> = references.iter().map(|r| log_inertia(kmeans(r, k, cfg, rng).inertia)).collect();
        let mean = logs.iter().sum::<f64>() / b as f64;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / b as f64).sqrt();
        (mean - log_inertia(fit.inertia), sd * (1.0 + 1.0 / b as f64).sqrt(), fit)
    };
    let first = evaluate(1, rng);
    gaps.push(first.0);
    errors.push(first.1);
    fits.push(first.2);
    for k in 1..k_cap {
        let next = evaluate(k + 1, rng);
        gaps.push(next.0);
        errors.push(next.1);
        fits.push(next.2);
        if gaps[k - 1] >= gaps[k] - errors[k] {
            let fit = fits.swap_remove(k - 1);
            return GapSelection { k, gaps, errors, fit };
        }
    }
    let fit = fits.pop().unwrap();
    GapSelection {
        k: k_cap,
        gaps,
        errors,
        fit,
    }
}
