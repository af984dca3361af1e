//! Supervisor-side selection of sharing partners.
//!
//! For one reporting window a supervisor:
//! 1. splits its subordinates' context summaries by neighbor count (only
//!    agents with identical action spaces are comparable),
//! 2. fits a Mahalanobis metric per split,
//! 3. clusters each split into potential sharing groups (k-means in the
//!    whitened space, `k` by gap statistic),
//! 4. samples sharing groups within each potential group from Boltzmann
//!    weights over pairwise distances.

mod cluster;
mod metric;
mod partners;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cluster::{kmeans, select_k, ClusterConfig, GapSelection, KMeansFit};
pub use metric::MetricModel;
pub use partners::{
    build_gram, sample_groups, sampling_distribution, select_sharing_partners, GramMatrix, PairTable,
    PairWeighting, PotentialSharingGroup, SelectionConfig, SharingMap,
};

use crate::context::{ContextFeatureVector, ContextSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharingConfig {
    pub tau_share: f64,
    /// Use `exp(+M)` weights, favoring dissimilar pairs.
    pub literal_sign: bool,
    pub weighting: PairWeighting,
    pub shrinkage: f64,
    pub k_max: usize,
    pub gap_references: usize,
    pub kmeans_max_iterations: usize,
    pub kmeans_tolerance: f64,
}

impl Default for SharingConfig {
    fn default() -> Self {
        let cluster = ClusterConfig::default();
        let selection = SelectionConfig::default();
        Self {
            tau_share: selection.tau_share,
            literal_sign: selection.literal_sign,
            weighting: selection.weighting,
            shrinkage: 0.1,
            k_max: cluster.k_max,
            gap_references: cluster.references,
            kmeans_max_iterations: cluster.max_iterations,
            kmeans_tolerance: cluster.tolerance,
        }
    }
}

impl SharingConfig {
    pub fn cluster(&self) -> ClusterConfig {
        ClusterConfig {
            k_max: self.k_max,
            references: self.gap_references,
            max_iterations: self.kmeans_max_iterations,
            tolerance: self.kmeans_tolerance,
        }
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            tau_share: self.tau_share,
            literal_sign: self.literal_sign,
            weighting: self.weighting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfiguration(m.to_string()));
        if !(self.tau_share > 0.0) {
            return bad("tau_share must be positive");
        }
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return bad("shrinkage must lie in [0, 1]");
        }
        if self.k_max == 0 || self.gap_references == 0 || self.kmeans_max_iterations == 0 {
            return bad("k_max, gap_references and kmeans_max_iterations must be positive");
        }
        Ok(())
    }
}

/// Clusters same-dimension summaries into potential sharing groups.
pub fn partition_groups<R: Rng + ?Sized>(
    summaries: &[ContextSummary],
    metric: &MetricModel,
    cfg: &ClusterConfig,
    rng: &mut R,
) -> Vec<PotentialSharingGroup> {
    if summaries.len() < 2 {
        return vec![PotentialSharingGroup {
            index: 0,
            members: summaries.to_vec(),
        }];
    }
    let points: Vec<Vec<f64>> = summaries.iter().map(|s| metric.whiten(&s.mean)).collect();
    let selection = select_k(&points, cfg, rng);
    let mut by_cluster: BTreeMap<usize, Vec<ContextSummary>> = BTreeMap::new();
    for (summary, &c) in summaries.iter().zip(&selection.fit.assignments) {
        by_cluster.entry(c).or_default().push(summary.clone());
    }
    let mut groups: Vec<Vec<ContextSummary>> = by_cluster.into_values().collect();
    groups.sort_by_key(|g| g[0].agent);
    groups
        .into_iter()
        .enumerate()
        .map(|(index, members)| PotentialSharingGroup { index, members })
        .collect()
}

/// Outcome of the pipeline for one neighbor-count split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRecord {
    pub neighbor_count: usize,
    pub members: usize,
    pub k: usize,
    pub group_sizes: Vec<usize>,
    /// Whether the metric was fit on per-step feature vectors.
    pub fit_on_steps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub map: SharingMap,
    pub splits: Vec<SplitRecord>,
}

fn fit_split_metric(
    summaries: &[ContextSummary],
    steps: &[&[ContextFeatureVector]],
    shrinkage: f64,
) -> (MetricModel, bool) {
    let d = summaries[0].dimension();
    if summaries.len() > d {
        if let Ok(m) = MetricModel::fit(&summaries.iter().map(|s| s.mean.clone()).collect::<Vec<_>>(), shrinkage) {
            return (m, false);
        }
    }
    let samples: Vec<Vec<f64>> = steps
        .iter()
        .flat_map(|w| w.iter())
        .filter(|f| f.dimension() == d)
        .map(|f| f.values().iter().map(|&v| f64::from(v)).collect())
        .collect();
    match MetricModel::fit(&samples, shrinkage) {
        Ok(m) => (m, true),
        Err(_) => (MetricModel::euclidean(d), true),
    }
}

/// Runs the full selection pipeline over one supervisor's window.
///
/// `entries` pairs each subordinate's (possibly noise-corrupted) summary with
/// its raw per-step feature vectors for the window.
pub fn plan_window<R: Rng + ?Sized>(
    entries: &[(ContextSummary, &[ContextFeatureVector])],
    cfg: &SharingConfig,
    rng: &mut R,
) -> WindowPlan {
    let mut splits: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (s, _)) in entries.iter().enumerate() {
        splits.entry(s.neighbor_count).or_default().push(i);
    }
    let mut map = SharingMap::default();
    let mut records = Vec::new();
    let cluster = cfg.cluster();
    let selection = cfg.selection();
    for (neighbor_count, idx) in splits {
        let summaries: Vec<ContextSummary> = idx.iter().map(|&i| entries[i].0.clone()).collect();
        if summaries.len() < 2 {
            records.push(SplitRecord {
                neighbor_count,
                members: summaries.len(),
                k: 1,
                group_sizes: vec![summaries.len()],
                fit_on_steps: false,
            });
            continue;
        }
        let steps: Vec<&[ContextFeatureVector]> = idx.iter().map(|&i| entries[i].1).collect();
        let (metric, fit_on_steps) = fit_split_metric(&summaries, &steps, cfg.shrinkage);
        let groups = partition_groups(&summaries, &metric, &cluster, rng);
        map.merge(select_sharing_partners(&groups, &metric, &selection, rng));
        records.push(SplitRecord {
            neighbor_count,
            members: summaries.len(),
            k: groups.len(),
            group_sizes: groups.iter().map(PotentialSharingGroup::len).collect(),
            fit_on_steps,
        });
    }
    WindowPlan { map, splits: records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::tasknet::AgentId;

    fn summary(agent: u32, mean: Vec<f64>) -> ContextSummary {
        ContextSummary {
            agent: AgentId(agent),
            neighbor_count: (mean.len() - 1) / 2,
            mean,
            sample_count: 1,
        }
    }

    #[test]
    fn identical_summaries_form_one_group() {
        let s: Vec<_> = (0..12).map(|i| summary(i, vec![1.0, 0.3, 0.0])).collect();
        let mut rng = stream_rng(0, Stream::Sharing(0));
        let groups = partition_groups(&s, &MetricModel::euclidean(3), &ClusterConfig::default(), &mut rng);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 12);
    }

    #[test]
    fn lone_summary_is_a_singleton_group() {
        let s = vec![summary(5, vec![1.0])];
        let mut rng = stream_rng(0, Stream::Sharing(0));
        let groups = partition_groups(&s, &MetricModel::euclidean(1), &ClusterConfig::default(), &mut rng);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].agents(), vec![AgentId(5)]);
    }

    #[test]
    fn plan_never_mixes_neighbor_counts() {
        let mut entries = Vec::new();
        for i in 0..6 {
            entries.push((summary(i, vec![1.0, 0.0, 0.0]), &[][..]));
            entries.push((summary(100 + i, vec![1.0, 0.0, 0.0, 0.0, 0.0]), &[][..]));
        }
        let cfg = SharingConfig {
            tau_share: 1e3,
            ..SharingConfig::default()
        };
        let mut rng = stream_rng(3, Stream::Sharing(0));
        let plan = plan_window(&entries, &cfg, &mut rng);
        plan.map.check_invariants().unwrap();
        for (a, b) in plan.map.edges() {
            assert_eq!(a.0 >= 100, b.0 >= 100);
        }
        assert_eq!(plan.splits.len(), 2);
    }
}
