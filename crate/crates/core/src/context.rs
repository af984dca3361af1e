//! Context features and per-window context summaries.
//!
//! A feature vector for agent `i` at step `t` is
//! `[rel_load, env_rate(n_1..n_m), agent_rate(n_1..n_m)]` where `rel_load` is
//! the agent's backlog over the mean neighbor backlog (floored at
//! [`LOAD_FLOOR`]) and the rates count tasks each neighbor received from the
//! environment and from other agents over the trailing rate window.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tasknet::{AgentId, NeighborhoodSnapshot};

/// Denominator floor for the relative-load feature, in tasks.
pub const LOAD_FLOOR: f64 = 1.0;

pub fn feature_dimension(neighbor_count: usize) -> usize {
    1 + 2 * neighbor_count
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatureVector {
    pub t: u64,
    values: Vec<f32>,
}

impl ContextFeatureVector {
    pub fn new(t: u64, rel_load: f32, env_rates: &[f32], agent_rates: &[f32]) -> Self {
        assert_eq!(env_rates.len(), agent_rates.len());
        let mut values = Vec::with_capacity(1 + 2 * env_rates.len());
        values.push(rel_load);
        values.extend_from_slice(env_rates);
        values.extend_from_slice(agent_rates);
        Self { t, values }
    }

    /// Rebuilds a vector from its flat `[rel_load, env.., agent..]` layout.
    pub fn from_values(t: u64, values: Vec<f32>) -> Option<Self> {
        (values.len() % 2 == 1).then_some(Self { t, values })
    }

    pub fn neighbor_count(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn rel_load(&self) -> f32 {
        self.values[0]
    }

    pub fn neighbor_env_rates(&self) -> &[f32] {
        &self.values[1..1 + self.neighbor_count()]
    }

    pub fn neighbor_agent_rates(&self) -> &[f32] {
        &self.values[1 + self.neighbor_count()..]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Feature vector of one agent at one step from its neighborhood snapshot.
pub fn compute_features(snapshot: &NeighborhoodSnapshot) -> ContextFeatureVector {
    let n = snapshot.neighbor_loads.len();
    let mean_neighbor = if n == 0 {
        0.0
    } else {
        snapshot.neighbor_loads.iter().sum::<f64>() / n as f64
    };
    let rel = snapshot.own_load / mean_neighbor.max(LOAD_FLOOR);
    let env: Vec<f32> = snapshot.neighbor_env_rates.iter().map(|&r| r as f32).collect();
    let agent: Vec<f32> = snapshot.neighbor_agent_rates.iter().map(|&r| r as f32).collect();
    ContextFeatureVector::new(snapshot.t, rel as f32, &env, &agent)
}

/// Mean feature vector of one agent over one reporting window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSummary {
    pub agent: AgentId,
    pub mean: Vec<f64>,
    pub sample_count: usize,
    pub neighbor_count: usize,
}

impl ContextSummary {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }
}

/// Component-wise mean of a window of feature vectors.
pub fn summarize_window(agent: AgentId, features: &[ContextFeatureVector]) -> Result<ContextSummary> {
    let first = features
        .first()
        .ok_or_else(|| Error::MalformedWindow("empty feature window".into()))?;
    let d = first.dimension();
    let mut sum = vec![0.0f64; d];
    for f in features {
        if f.dimension() != d {
            return Err(Error::MalformedWindow(format!(
                "feature dimension {} differs from {d}",
                f.dimension()
            )));
        }
        for (acc, &v) in sum.iter_mut().zip(f.values()) {
            *acc += f64::from(v);
        }
    }
    let k = features.len() as f64;
    Ok(ContextSummary {
        agent,
        mean: sum.into_iter().map(|s| s / k).collect(),
        sample_count: features.len(),
        neighbor_count: first.neighbor_count(),
    })
}

/// Per-component standard deviation across a set of same-dimension summaries.
pub fn component_std(summaries: &[ContextSummary]) -> Vec<f64> {
    let Some(first) = summaries.first() else {
        return Vec::new();
    };
    let n = summaries.len() as f64;
    (0..first.dimension())
        .map(|c| {
            let mean = summaries.iter().map(|s| s.mean[c]).sum::<f64>() / n;
            let var = summaries.iter().map(|s| (s.mean[c] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect()
}

/// Adds zero-mean Gaussian noise with per-component deviation
/// `level * group_std[c]`. A level of zero returns the summary untouched.
pub fn inject_noise<R: Rng + ?Sized>(
    summary: &ContextSummary,
    level: f64,
    group_std: &[f64],
    rng: &mut R,
) -> ContextSummary {
    let mut out = summary.clone();
    if level == 0.0 {
        return out;
    }
    for (v, sd) in out.mean.iter_mut().zip(group_std) {
        let z: f64 = StandardNormal.sample(rng);
        *v += z * level * sd;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::seq::SliceRandom;

    fn snapshot(own: f64, loads: &[f64], env: &[f64], agent: &[f64]) -> NeighborhoodSnapshot {
        NeighborhoodSnapshot {
            agent: AgentId(0),
            t: 5,
            own_load: own,
            neighbor_loads: loads.to_vec(),
            neighbor_env_rates: env.to_vec(),
            neighbor_agent_rates: agent.to_vec(),
        }
    }

    #[test]
    fn symmetric_idle_neighborhood() {
        let f = compute_features(&snapshot(3.0, &[3.0; 4], &[0.0; 4], &[0.0; 4]));
        assert_eq!(f.values(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.dimension(), feature_dimension(4));
    }

    #[test]
    fn relative_load() {
        let f = compute_features(&snapshot(8.0, &[2.0; 4], &[0.0; 4], &[0.0; 4]));
        assert_eq!(f.rel_load(), 4.0);
        let idle = compute_features(&snapshot(3.0, &[0.0, 0.0], &[0.0; 2], &[0.0; 2]));
        assert_eq!(idle.rel_load(), 3.0);
    }

    #[test]
    fn rates_are_copied_per_neighbor() {
        let f = compute_features(&snapshot(0.0, &[1.0, 1.0, 1.0], &[0.3, 0.0, 0.25], &[0.1, 0.9, 0.0]));
        assert_eq!(f.neighbor_env_rates(), &[0.3f32, 0.0, 0.25]);
        assert_eq!(f.neighbor_agent_rates(), &[0.1f32, 0.9, 0.0]);
    }

    #[test]
    fn summary_of_identical_vectors() {
        let v = ContextFeatureVector::new(0, 1.5, &[0.25, 0.5], &[0.0, 2.0]);
        let s = summarize_window(AgentId(1), &vec![v.clone(); 7]).unwrap();
        let expected: Vec<f64> = v.values().iter().map(|&x| f64::from(x)).collect();
        assert_eq!(s.mean, expected);
        assert_eq!(s.sample_count, 7);
        assert_eq!(s.neighbor_count, 2);
    }

    #[test]
    fn summary_of_two_vectors() {
        let a = ContextFeatureVector::new(0, 0.0, &[0.0; 4], &[0.0; 4]);
        let b = ContextFeatureVector::new(1, 2.0, &[2.0; 4], &[2.0; 4]);
        let s = summarize_window(AgentId(0), &[a, b]).unwrap();
        assert_eq!(s.mean, vec![1.0; 9]);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let a = ContextFeatureVector::new(0, 0.0, &[0.0; 4], &[0.0; 4]);
        let b = ContextFeatureVector::new(1, 0.0, &[0.0; 3], &[0.0; 3]);
        assert!(matches!(summarize_window(AgentId(0), &[a, b]), Err(Error::MalformedWindow(_))));
        assert!(matches!(summarize_window(AgentId(0), &[]), Err(Error::MalformedWindow(_))));
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let mut rng = stream_rng(2, Stream::Trial(0));
        let mut window: Vec<ContextFeatureVector> = (0..115)
            .map(|t| {
                let r = |rng: &mut crate::rng::SimRng| rng.random_range(0.0f32..3.0);
                ContextFeatureVector::new(t, r(&mut rng), &[r(&mut rng), r(&mut rng)], &[r(&mut rng), r(&mut rng)])
            })
            .collect();
        let a = summarize_window(AgentId(0), &window).unwrap();
        window.shuffle(&mut rng);
        let b = summarize_window(AgentId(0), &window).unwrap();
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = ContextSummary {
            agent: AgentId(3),
            mean: vec![0.1, 0.2, 0.3],
            sample_count: 10,
            neighbor_count: 1,
        };
        let mut rng = stream_rng(1, Stream::Noise(0));
        assert_eq!(inject_noise(&s, 0.0, &[1.0, 1.0, 1.0], &mut rng), s);
    }

    #[test]
    fn noise_std_matches_target() {
        let s = ContextSummary {
            agent: AgentId(0),
            mean: vec![1.0, -2.0],
            sample_count: 1,
            neighbor_count: 0,
        };
        let group_std = [0.8, 0.2];
        let mut rng = stream_rng(17, Stream::Noise(1));
        let n = 10_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..n {
            let out = inject_noise(&s, 0.5, &group_std, &mut rng);
            for c in 0..2 {
                let e = out.mean[c] - s.mean[c];
                sums[c] += e;
                sq[c] += e * e;
            }
        }
        for c in 0..2 {
            let mean = sums[c] / n as f64;
            let sd = (sq[c] / n as f64 - mean * mean).sqrt();
            let target = 0.5 * group_std[c];
            assert!((sd - target).abs() / target < 0.02, "component {c}: {sd} vs {target}");
        }
    }

    #[test]
    fn unit_noise_reaches_feature_spread() {
        let summaries: Vec<ContextSummary> = (0..20)
            .map(|i| ContextSummary {
                agent: AgentId(i),
                mean: vec![f64::from(i) * 0.1, f64::from(i % 3)],
                sample_count: 1,
                neighbor_count: 0,
            })
            .collect();
        let sd = component_std(&summaries);
        let mut rng = stream_rng(4, Stream::Noise(2));
        let n = 20_000;
        let mut sq = [0.0f64; 2];
        for i in 0..n {
            let s = &summaries[i % summaries.len()];
            let out = inject_noise(s, 1.0, &sd, &mut rng);
            for c in 0..2 {
                sq[c] += (out.mean[c] - s.mean[c]).powi(2);
            }
        }
        for c in 0..2 {
            let noise_sd = (sq[c] / n as f64).sqrt();
            assert!(noise_sd >= 0.97 * sd[c], "{noise_sd} vs {}", sd[c]);
        }
    }
}
