//! Random input generators and brute-force oracles shared by the
//! integration suites.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ctxshare::context::{ContextFeatureVector, ContextSummary};
use ctxshare::learner::{LocalState, Observation, LOAD_BUCKETS};
use ctxshare::rng::SimRng;
use ctxshare::tasknet::{AgentId, LocalAction};
use ctxshare::transport::{compress_lossy, CompressionMode, DonorPayload, Message, Payload, ReportMessage, ShareMessage};
use proptest::test_runner::Config;
use rand::{Rng, SeedableRng};

/// Proptest settings with `cases` cases and no failure persistence files.
pub fn cases(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn random_state<R: Rng>(rng: &mut R, neighbor_count: usize) -> LocalState {
    let own = rng.random_range(0..LOAD_BUCKETS);
    let nbrs: Vec<u8> = (0..neighbor_count).map(|_| rng.random_range(0..LOAD_BUCKETS)).collect();
    LocalState::new(own, &nbrs)
}

/// `len` transitions with strictly increasing timestamps.
pub fn random_observations<R: Rng>(rng: &mut R, neighbor_count: usize, len: usize) -> Vec<Observation> {
    let mut t = rng.random_range(0..1_000_000u64);
    (0..len)
        .map(|_| {
            t += rng.random_range(1..4u64);
            Observation {
                state: random_state(rng, neighbor_count),
                action: LocalAction::from_index(rng.random_range(0..=neighbor_count)),
                next_state: random_state(rng, neighbor_count),
                reward: rng.random_range(1e-3f32..=1.0),
                t,
            }
        })
        .collect()
}

pub fn random_features<R: Rng>(rng: &mut R, neighbor_count: usize, len: usize) -> Vec<ContextFeatureVector> {
    (0..len as u64)
        .map(|t| {
            let env: Vec<f32> = (0..neighbor_count).map(|_| rng.random_range(0.0..1.0)).collect();
            let agent: Vec<f32> = (0..neighbor_count).map(|_| rng.random_range(0.0..3.0)).collect();
            ContextFeatureVector::new(t, rng.random_range(0.0..20.0), &env, &agent)
        })
        .collect()
}

/// Any report or share message, raw or spline-compressed.
pub fn random_message<R: Rng>(rng: &mut R) -> Message {
    let neighbor_count = rng.random_range(0..=4usize);
    let window = rng.random::<u32>();
    let len = if rng.random_bool(0.1) { 0 } else { rng.random_range(1..60) };
    if rng.random_bool(0.5) {
        let observations = random_observations(rng, neighbor_count, len);
        let features = if rng.random_bool(0.5) {
            let len = rng.random_range(0..40);
            Some(random_features(rng, neighbor_count, len))
        } else {
            None
        };
        Message::Report(ReportMessage {
            agent: AgentId(rng.random()),
            window,
            neighbor_count: neighbor_count as u8,
            observations,
            features,
        })
    } else {
        let donors = (0..rng.random_range(0..4))
            .map(|_| {
                let len = rng.random_range(0..50);
                let obs = random_observations(rng, neighbor_count, len);
                // an empty window carries no neighbor count to compress against
                let payload = if obs.is_empty() || rng.random_bool(0.5) {
                    Payload::build(&obs, CompressionMode::Lossless).unwrap()
                } else {
                    Payload::Compressed(compress_lossy(&obs, rng.random_range(1..25)).unwrap())
                };
                DonorPayload {
                    donor: AgentId(rng.random()),
                    payload,
                }
            })
            .collect();
        Message::Share(ShareMessage {
            recipient: AgentId(rng.random()),
            window,
            neighbor_count: neighbor_count as u8,
            donors,
        })
    }
}

pub fn summary(agent: u32, mean: Vec<f64>) -> ContextSummary {
    ContextSummary {
        agent: AgentId(agent),
        neighbor_count: (mean.len() - 1) / 2,
        mean,
        sample_count: 1,
    }
}

/// Symmetric zero-diagonal distance matrix over `n` points in the plane.
pub fn planar_gram<R: Rng>(rng: &mut R, n: usize, spread: f64) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..spread), rng.random_range(0.0..spread)))
        .collect();
    let mut m = vec![0.0; n * n];
    for h in 0..n {
        for j in 0..n {
            m[h * n + j] = ((pts[h].0 - pts[j].0).powi(2) + (pts[h].1 - pts[j].1).powi(2)).sqrt();
        }
    }
    m
}

/// Every permutation of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact probability that each unordered pair ends up in a common group
/// under the sequential without-replacement process, by enumerating every
/// visiting order and every accept/reject outcome.
pub fn enumerate_pair_inclusion(acceptance: &[f64], n: usize) -> BTreeMap<(usize, usize), f64> {
    let orders = permutations(n);
    let weight = 1.0 / orders.len() as f64;
    let mut partitions: BTreeMap<Vec<Vec<usize>>, f64> = BTreeMap::new();
    for order in &orders {
        explore(acceptance, n, order, 0, vec![true; n], Vec::new(), weight, &mut partitions);
    }
    let mut pairs = BTreeMap::new();
    for h in 0..n {
        for j in h + 1..n {
            let p: f64 = partitions
                .iter()
                .filter(|(groups, _)| groups.iter().any(|g| g.contains(&h) && g.contains(&j)))
                .map(|(_, p)| p)
                .sum();
            pairs.insert((h, j), p);
        }
    }
    pairs
}

#[allow(clippy::too_many_arguments)]
fn explore(
    acceptance: &[f64],
    n: usize,
    order: &[usize],
    visitor: usize,
    pool: Vec<bool>,
    groups: Vec<Vec<usize>>,
    prob: f64,
    out: &mut BTreeMap<Vec<Vec<usize>>, f64>,
) {
    if prob == 0.0 {
        return;
    }
    if visitor == n {
        let mut canon: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|mut g| {
                g.sort();
                g
            })
            .collect();
        canon.sort();
        *out.entry(canon).or_insert(0.0) += prob;
        return;
    }
    let a = order[visitor];
    if !pool[a] {
        explore(acceptance, n, order, visitor + 1, pool, groups, prob, out);
        return;
    }
    // all candidates b are trialled in visiting order; enumerate outcome bits
    let candidates: Vec<usize> = order.iter().copied().filter(|&b| b != a && pool[b]).collect();
    for mask in 0u32..(1 << candidates.len()) {
        let mut p = prob;
        let mut pool = pool.clone();
        let mut group = vec![a];
        for (i, &b) in candidates.iter().enumerate() {
            let q = acceptance[a * n + b];
            if mask & (1 << i) != 0 {
                p *= q;
                pool[b] = false;
                group.push(b);
            } else {
                p *= 1.0 - q;
            }
        }
        let mut groups = groups.clone();
        if group.len() > 1 {
            pool[a] = false;
            groups.push(group);
        }
        explore(acceptance, n, order, visitor + 1, pool, groups, p, out);
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
