//! Gram matrices, Boltzmann pair tables and stochastic partner selection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::ContextSummary;
use crate::sharing::MetricModel;
use crate::tasknet::AgentId;

/// Summaries deemed similar enough to be candidates for sharing.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSharingGroup {
    pub index: usize,
    pub members: Vec<ContextSummary>,
}

impl PotentialSharingGroup {
    pub fn agents(&self) -> Vec<AgentId> {
        self.members.iter().map(|m| m.agent).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Pairwise context distances over one potential sharing group.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub agents: Vec<AgentId>,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn from_entries(agents: Vec<AgentId>, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), agents.len() * agents.len());
        Self { agents, entries }
    }

    pub fn size(&self) -> usize {
        self.agents.len()
    }

    pub fn get(&self, h: usize, j: usize) -> f64 {
        self.entries[h * self.size() + j]
    }
}

pub fn build_gram(group: &PotentialSharingGroup, metric: &MetricModel) -> GramMatrix {
    let n = group.len();
    let mut entries = vec![0.0; n * n];
    for h in 0..n {
        for j in h + 1..n {
            let d = metric.distance(&group.members[h].mean, &group.members[j].mean);
            entries[h * n + j] = d;
            entries[j * n + h] = d;
        }
    }
    GramMatrix::from_entries(group.agents(), entries)
}

/// Boltzmann distribution over the unordered pairs of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    n: usize,
    probs: Vec<f64>,
}

impl PairTable {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Probability of the unordered pair `{h, j}`; zero on the diagonal.
    pub fn prob(&self, h: usize, j: usize) -> f64 {
        self.probs[h * self.n + j]
    }

    pub fn total(&self) -> f64 {
        (0..self.n)
            .flat_map(|h| (h + 1..self.n).map(move |j| (h, j)))
            .map(|(h, j)| self.prob(h, j))
            .sum()
    }
}

/// `P(h, j) ∝ exp(∓M[h][j] / tau)` normalized over unordered pairs. The
/// negative sign favors similar pairs; `literal_sign` flips it.
pub fn sampling_distribution(gram: &GramMatrix, tau: f64, literal_sign: bool) -> PairTable {
    let n = gram.size();
    let sign = if literal_sign { 1.0 } else { -1.0 };
    let mut probs = vec![0.0; n * n];
    if n < 2 {
        return PairTable { n, probs };
    }
    let logit = |h: usize, j: usize| sign * gram.get(h, j) / tau;
    let max = (0..n)
        .flat_map(|h| (h + 1..n).map(move |j| (h, j)))
        .map(|(h, j)| logit(h, j))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for h in 0..n {
        for j in h + 1..n {
            let w = (logit(h, j) - max).exp();
            probs[h * n + j] = w;
            probs[j * n + h] = w;
            total += w;
        }
    }
    probs.iter_mut().for_each(|p| *p /= total);
    PairTable { n, probs }
}

/// How the per-pair acceptance probability of the selection pass is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairWeighting {
    /// Bernoulli trial with the normalized pair-table probability.
    Normalized,
    /// Bernoulli trial with the unnormalized Boltzmann factor `exp(-M / tau)`.
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub tau_share: f64,
    pub literal_sign: bool,
    pub weighting: PairWeighting,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            tau_share: 1.0,
            literal_sign: false,
            weighting: PairWeighting::Kernel,
        }
    }
}

impl SelectionConfig {
    /// Per-pair acceptance probabilities as an `n x n` matrix.
    pub fn acceptance(&self, gram: &GramMatrix) -> Vec<f64> {
        let n = gram.size();
        match self.weighting {
            PairWeighting::Normalized => {
                let table = sampling_distribution(gram, self.tau_share, self.literal_sign);
                table.probs
            }
            PairWeighting::Kernel => {
                let sign = if self.literal_sign { 1.0 } else { -1.0 };
                let mut p = vec![0.0; n * n];
                for h in 0..n {
                    for j in 0..n {
                        if h != j {
                            p[h * n + j] = (sign * gram.get(h, j) / self.tau_share).exp().min(1.0);
                        }
                    }
                }
                p
            }
        }
    }
}

/// Ψ: each agent's set of sharing partners.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharingMap {
    partners: BTreeMap<AgentId, BTreeSet<AgentId>>,
}

impl SharingMap {
    pub fn partners(&self, agent: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.partners.get(&agent).into_iter().flatten().copied()
    }

    pub fn partner_count(&self, agent: AgentId) -> usize {
        self.partners.get(&agent).map_or(0, BTreeSet::len)
    }

    /// Registers `agents` as one closed sharing group.
    pub fn insert_group(&mut self, agents: &[AgentId]) {
        if agents.len() < 2 {
            return;
        }
        for &a in agents {
            let set = self.partners.entry(a).or_default();
            set.extend(agents.iter().copied().filter(|&b| b != a));
        }
    }

    pub fn merge(&mut self, other: SharingMap) {
        for (a, set) in other.partners {
            self.partners.entry(a).or_default().extend(set);
        }
    }

    /// Agents with at least one partner.
    pub fn sharing_agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.partners.iter().filter(|(_, s)| !s.is_empty()).map(|(a, _)| *a)
    }

    /// Distinct sharing groups, each sorted, in ascending order.
    pub fn groups(&self) -> Vec<Vec<AgentId>> {
        let mut out: BTreeSet<Vec<AgentId>> = BTreeSet::new();
        for (a, set) in &self.partners {
            if set.is_empty() {
                continue;
            }
            let mut g: Vec<AgentId> = set.iter().copied().collect();
            g.push(*a);
            g.sort();
            out.insert(g);
        }
        out.into_iter().collect()
    }

    /// Undirected `(a, b)` edges with `a < b`.
    pub fn edges(&self) -> Vec<(AgentId, AgentId)> {
        self.partners
            .iter()
            .flat_map(|(a, set)| set.iter().filter(move |b| *b > a).map(move |b| (*a, *b)))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.partners.values().all(BTreeSet::is_empty)
    }

    /// Checks irreflexivity, symmetry and disjointness of the groups.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (a, set) in &self.partners {
            if set.contains(a) {
                return Err(format!("agent {a} is its own partner"));
            }
            for b in set {
                if !self.partners.get(b).is_some_and(|s| s.contains(a)) {
                    return Err(format!("{b} in Ψ({a}) but not vice versa"));
                }
                // same group means identical closed membership
                let mut ga: BTreeSet<AgentId> = set.clone();
                ga.insert(*a);
                let mut gb: BTreeSet<AgentId> = self.partners[b].clone();
                gb.insert(*b);
                if ga != gb {
                    return Err(format!("agents {a} and {b} belong to overlapping groups"));
                }
            }
        }
        Ok(())
    }
}

/// Runs the sequential without-replacement selection over one group's
/// acceptance matrix and returns the formed groups as member indices.
///
/// Agents are visited in a random order. A visited agent that is still
/// unassigned trials every other unassigned agent; each success moves that
/// agent into the visitor's group. A visitor that gains a partner leaves the
/// candidate pool.
pub fn sample_groups<R: Rng + ?Sized>(acceptance: &[f64], n: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pool = vec![true; n];
    let mut groups = Vec::new();
    for &a in &order {
        if !pool[a] {
            continue;
        }
        let mut group = vec![a];
        for &b in &order {
            if b == a || !pool[b] {
                continue;
            }
            if rng.random::<f64>() < acceptance[a * n + b] {
                pool[b] = false;
                group.push(b);
            }
        }
        if group.len() > 1 {
            pool[a] = false;
            groups.push(group);
        }
    }
    groups
}

/// Selects sharing partners within every potential sharing group.
pub fn select_sharing_partners<R: Rng + ?Sized>(
    groups: &[PotentialSharingGroup],
    metric: &MetricModel,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> SharingMap {
    let mut map = SharingMap::default();
    for group in groups {
        if group.len() < 2 {
            continue;
        }
        let gram = build_gram(group, metric);
        let acceptance = cfg.acceptance(&gram);
        for members in sample_groups(&acceptance, gram.size(), rng) {
            let agents: Vec<AgentId> = members.iter().map(|&i| gram.agents[i]).collect();
            map.insert_group(&agents);
        }
    }
    map
}
