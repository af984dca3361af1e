//! Per-agent tabular Q-learning with Boltzmann (softmax) action selection.
//!
//! Each agent owns a [`QTable`] keyed by its discretized [`LocalState`]. The
//! table learns from the agent's own transitions with rate `alpha` and from
//! supervisor-relayed transitions with rate `alpha_shared`. Relayed batches
//! are only accepted when the donor's action space matches (same neighbor
//! count), otherwise the whole batch is rejected and counted.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasknet::LocalAction;

pub const MAX_NEIGHBORS: usize = 4;
pub const LOAD_BUCKETS: u8 = 5;

/// Maps a queue backlog onto `{0, 1-2, 3-5, 6-10, >10}`.
pub fn load_bucket(backlog: usize) -> u8 {
    match backlog {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=10 => 3,
        _ => 4,
    }
}

/// Discretized local observation: own backlog bucket plus one bucket per neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocalState {
    own: u8,
    neighbors: [u8; MAX_NEIGHBORS],
    neighbor_count: u8,
}

impl LocalState {
    pub fn new(own: u8, neighbors: &[u8]) -> Self {
        assert!(neighbors.len() <= MAX_NEIGHBORS, "too many neighbors");
        assert!(own < LOAD_BUCKETS && neighbors.iter().all(|&b| b < LOAD_BUCKETS));
        let mut buf = [0u8; MAX_NEIGHBORS];
        buf[..neighbors.len()].copy_from_slice(neighbors);
        Self {
            own,
            neighbors: buf,
            neighbor_count: neighbors.len() as u8,
        }
    }

    pub fn own(&self) -> u8 {
        self.own
    }

    pub fn neighbors(&self) -> &[u8] {
        &self.neighbors[..self.neighbor_count as usize]
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count as usize
    }

    /// Number of numeric components (own bucket followed by neighbor buckets).
    pub fn components(&self) -> impl Iterator<Item = u8> + '_ {
        std::iter::once(self.own).chain(self.neighbors().iter().copied())
    }

    pub fn state_count(neighbor_count: usize) -> u32 {
        u32::from(LOAD_BUCKETS).pow(neighbor_count as u32 + 1)
    }

    /// Mixed-radix code, own bucket least significant.
    pub fn code(&self) -> u32 {
        let base = u32::from(LOAD_BUCKETS);
        self.neighbors()
            .iter()
            .rev()
            .fold(0u32, |acc, &b| acc * base + u32::from(b))
            * base
            + u32::from(self.own)
    }

    pub fn from_code(code: u32, neighbor_count: usize) -> Option<Self> {
        if neighbor_count > MAX_NEIGHBORS || code >= Self::state_count(neighbor_count) {
            return None;
        }
        let base = u32::from(LOAD_BUCKETS);
        let own = (code % base) as u8;
        let mut rest = code / base;
        let mut buf = [0u8; MAX_NEIGHBORS];
        for slot in buf.iter_mut().take(neighbor_count) {
            *slot = (rest % base) as u8;
            rest /= base;
        }
        Some(Self::new(own, &buf[..neighbor_count]))
    }

    /// Builds a state from raw component values, snapping each to the nearest bucket.
    pub fn quantized(components: &[f64]) -> Self {
        let snap = |v: f64| -> u8 {
            if v.is_nan() {
                0
            } else {
                v.round().clamp(0.0, f64::from(LOAD_BUCKETS - 1)) as u8
            }
        };
        let own = snap(components[0]);
        let nbrs: Vec<u8> = components[1..].iter().map(|&v| snap(v)).collect();
        Self::new(own, &nbrs)
    }
}

/// One `(s, a, s', r)` transition stamped with the step at which it was taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub state: LocalState,
    pub action: LocalAction,
    pub next_state: LocalState,
    pub reward: f32,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub alpha_shared: f64,
    pub gamma: f64,
    pub tau_start: f64,
    pub tau_end: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            alpha_shared: 0.05,
            gamma: 0.95,
            tau_start: 0.05,
            tau_end: 0.002,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfiguration(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.alpha_shared > 0.0 && self.alpha_shared <= 1.0) {
            return bad("alpha_shared must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0) {
            return bad("temperatures must be positive");
        }
        Ok(())
    }

    /// Geometric annealing from `tau_start` at step 0 to `tau_end` at `horizon`.
    pub fn temperature(&self, step: u64, horizon: u64) -> f64 {
        if horizon == 0 {
            return self.tau_end;
        }
        let frac = (step as f64 / horizon as f64).clamp(0.0, 1.0);
        self.tau_start * (self.tau_end / self.tau_start).powf(frac)
    }
}

/// Tabular action values for one agent. Missing entries read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    neighbor_count: usize,
    entries: HashMap<u32, Vec<f64>>,
    pub alpha: f64,
    pub alpha_shared: f64,
    pub gamma: f64,
    rejected_batches: u64,
}

impl QTable {
    pub fn new(neighbor_count: usize, cfg: &LearnerConfig) -> Self {
        Self {
            neighbor_count,
            entries: HashMap::new(),
            alpha: cfg.alpha,
            alpha_shared: cfg.alpha_shared,
            gamma: cfg.gamma,
            rejected_batches: 0,
        }
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    pub fn action_count(&self) -> usize {
        self.neighbor_count + 1
    }

    pub fn rejected_batches(&self) -> u64 {
        self.rejected_batches
    }

    pub fn value(&self, state: &LocalState, action: LocalAction) -> f64 {
        self.entries
            .get(&state.code())
            .map_or(0.0, |row| row[action.index()])
    }

    pub fn set_value(&mut self, state: &LocalState, action: LocalAction, value: f64) {
        let n = self.action_count();
        self.entries.entry(state.code()).or_insert_with(|| vec![0.0; n])[action.index()] = value;
    }

    /// Action values of `state`, zeros when never visited.
    pub fn row(&self, state: &LocalState) -> Vec<f64> {
        self.entries
            .get(&state.code())
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.action_count()])
    }

    pub fn max_value(&self, state: &LocalState) -> f64 {
        self.entries
            .get(&state.code())
            .map_or(0.0, |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Number of stored (state, action) entries.
    pub fn len(&self) -> usize {
        self.entries.len() * self.action_count()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterates stored rows as `(state code, values)` in ascending code order.
    pub fn rows(&self) -> Vec<(u32, &[f64])> {
        let mut rows: Vec<_> = self.entries.iter().map(|(k, v)| (*k, v.as_slice())).collect();
        rows.sort_by_key(|(k, _)| *k);
        rows
    }

    /// Softmax probabilities over the actions of `state` at temperature `tau`.
    pub fn policy(&self, state: &LocalState, tau: f64) -> Vec<f64> {
        softmax(&self.row(state), tau)
    }

    /// Samples an action from the Boltzmann policy of `state`.
    pub fn select_action<R: Rng + ?Sized>(&self, state: &LocalState, tau: f64, rng: &mut R) -> LocalAction {
        let n = self.action_count();
        if n == 1 {
            return LocalAction::ProcessLocally;
        }
        let probs = self.policy(state, tau);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return LocalAction::from_index(i);
            }
        }
        LocalAction::from_index(n - 1)
    }

    fn apply(&mut self, obs: &Observation, rate: f64) {
        let target = f64::from(obs.reward) + self.gamma * self.max_value(&obs.next_state);
        let n = self.action_count();
        let row = self
            .entries
            .entry(obs.state.code())
            .or_insert_with(|| vec![0.0; n]);
        let q = &mut row[obs.action.index()];
        *q += rate * (target - *q);
    }

    /// One-step Q-learning update with the local learning rate.
    pub fn update(&mut self, obs: &Observation) {
        self.apply(obs, self.alpha);
    }

    /// Replays a relayed batch in timestamp order with `alpha_shared`.
    ///
    /// A batch containing any observation from a different action space is
    /// rejected whole and leaves the table untouched.
    pub fn incorporate_shared(&mut self, batch: &[Observation]) -> Result<()> {
        if let Some(bad) = batch.iter().find(|o| {
            o.state.neighbor_count() != self.neighbor_count
                || o.next_state.neighbor_count() != self.neighbor_count
                || o.action.index() >= self.action_count()
        }) {
            self.rejected_batches += 1;
            return Err(Error::IncompatibleExperience {
                expected: self.neighbor_count,
                found: bad.state.neighbor_count(),
            });
        }
        let mut order: Vec<&Observation> = batch.iter().collect();
        order.sort_by_key(|o| o.t);
        for obs in order {
            self.apply(obs, self.alpha_shared);
        }
        Ok(())
    }

    const DUMP_MAGIC: &'static [u8; 4] = b"CXQT";
    const DUMP_VERSION: u8 = 1;

    /// Writes the table as `magic, version, neighbor_count, row_count, rows`.
    /// Rows are `(u32 code, f64 x action_count)`, little-endian, ascending code.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(Self::DUMP_MAGIC)?;
        out.write_all(&[Self::DUMP_VERSION, self.neighbor_count as u8])?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (code, values) in self.rows() {
            out.write_all(&code.to_le_bytes())?;
            for v in values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut input: R, cfg: &LearnerConfig) -> Result<Self> {
        let mut head = [0u8; 10];
        input.read_exact(&mut head)?;
        if &head[..4] != Self::DUMP_MAGIC {
            return Err(Error::Decode("bad q-table magic".into()));
        }
        if head[4] != Self::DUMP_VERSION {
            return Err(Error::Decode(format!("unsupported q-table version {}", head[4])));
        }
        let neighbor_count = head[5] as usize;
        if neighbor_count > MAX_NEIGHBORS {
            return Err(Error::Decode("neighbor count out of range".into()));
        }
        let rows = u32::from_le_bytes(head[6..10].try_into().unwrap());
        let mut table = QTable::new(neighbor_count, cfg);
        let n = table.action_count();
        for _ in 0..rows {
            let mut code = [0u8; 4];
            input.read_exact(&mut code)?;
            let code = u32::from_le_bytes(code);
            if code >= LocalState::state_count(neighbor_count) {
                return Err(Error::Decode("state code out of range".into()));
            }
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                let mut v = [0u8; 8];
                input.read_exact(&mut v)?;
                values.push(f64::from_le_bytes(v));
            }
            table.entries.insert(code, values);
        }
        Ok(table)
    }
}

/// Numerically stable softmax of `values / tau`.
pub fn softmax(values: &[f64], tau: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn cfg(alpha: f64, gamma: f64) -> LearnerConfig {
        LearnerConfig {
            alpha,
            alpha_shared: alpha,
            gamma,
            ..LearnerConfig::default()
        }
    }

    fn obs(s: LocalState, a: usize, s2: LocalState, r: f32, t: u64) -> Observation {
        Observation {
            state: s,
            action: LocalAction::from_index(a),
            next_state: s2,
            reward: r,
            t,
        }
    }

    #[test]
    fn bucket_edges() {
        let got: Vec<u8> = [0, 1, 2, 3, 5, 6, 10, 11, 500].iter().map(|&b| load_bucket(b)).collect();
        assert_eq!(got, vec![0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn state_code_round_trip() {
        for n in 0..=MAX_NEIGHBORS {
            for code in 0..LocalState::state_count(n) {
                let s = LocalState::from_code(code, n).unwrap();
                assert_eq!(s.code(), code);
            }
            assert!(LocalState::from_code(LocalState::state_count(n), n).is_none());
        }
    }

    #[test]
    fn uniform_policy_for_equal_values() {
        let q = QTable::new(3, &LearnerConfig::default());
        let s = LocalState::new(1, &[0, 2, 4]);
        let mut rng = stream_rng(11, Stream::Policy);
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[q.select_action(&s, 0.7, &mut rng).index()] += 1;
        }
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn softmax_matches_closed_form_for_two_actions() {
        let tau = 0.4;
        let mut q = QTable::new(1, &LearnerConfig::default());
        let s = LocalState::new(0, &[0]);
        q.set_value(&s, LocalAction::ProcessLocally, tau * 9f64.ln());
        let p = q.policy(&s, tau);
        assert!((p[0] - 0.9).abs() < 1e-12);
        let mut rng = stream_rng(3, Stream::Policy);
        let draws = 20_000;
        let hits = (0..draws)
            .filter(|_| q.select_action(&s, tau, &mut rng) == LocalAction::ProcessLocally)
            .count();
        let sigma = (draws as f64 * 0.9 * 0.1).sqrt();
        assert!((hits as f64 - 0.9 * draws as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn single_action_state_is_deterministic() {
        let q = QTable::new(0, &LearnerConfig::default());
        let s = LocalState::new(2, &[]);
        let mut rng = stream_rng(5, Stream::Policy);
        assert_eq!(q.policy(&s, 1.0), vec![1.0]);
        for _ in 0..100 {
            assert_eq!(q.select_action(&s, 1.0, &mut rng), LocalAction::ProcessLocally);
        }
    }

    #[test]
    fn one_step_collapse() {
        let mut q = QTable::new(2, &cfg(1.0, 0.0));
        let s = LocalState::new(1, &[1, 1]);
        q.update(&obs(s, 2, s, 0.5, 0));
        assert_eq!(q.value(&s, LocalAction::Forward(1)), 0.5);
        assert_eq!(q.value(&s, LocalAction::ProcessLocally), 0.0);
    }

    #[test]
    fn geometric_convergence_to_reward() {
        let alpha = 0.3;
        let r = 0.8f32;
        let mut q = QTable::new(2, &cfg(alpha, 0.0));
        let s = LocalState::new(1, &[0, 3]);
        let o = obs(s, 0, s, r, 0);
        for n in 1..=40 {
            q.update(&o);
            let expected = f64::from(r) * (1.0 - (1.0 - alpha).powi(n));
            assert!((q.value(&s, LocalAction::ProcessLocally) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_reward_keeps_zero_table() {
        let mut q = QTable::new(2, &cfg(0.5, 0.9));
        let s = LocalState::new(0, &[0, 0]);
        q.update(&obs(s, 1, s, 0.0, 0));
        assert!(q.rows().iter().all(|(_, row)| row.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn empty_batch_is_noop() {
        let mut q = QTable::new(2, &LearnerConfig::default());
        let s = LocalState::new(0, &[0, 0]);
        q.set_value(&s, LocalAction::ProcessLocally, 0.3);
        let before = q.clone();
        q.incorporate_shared(&[]).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn shared_replay_equals_local_replay_when_rates_match() {
        let c = cfg(0.2, 0.9);
        let mut local = QTable::new(2, &c);
        let mut shared = QTable::new(2, &c);
        let batch: Vec<Observation> = (0..30)
            .map(|t| {
                let s = LocalState::new((t % 5) as u8, &[(t % 3) as u8, 1]);
                let s2 = LocalState::new(((t + 1) % 5) as u8, &[((t + 1) % 3) as u8, 1]);
                obs(s, (t % 3) as usize, s2, 0.05 * (t % 7) as f32, t)
            })
            .collect();
        for o in &batch {
            local.update(o);
        }
        let mut reversed = batch.clone();
        reversed.reverse();
        shared.incorporate_shared(&reversed).unwrap();
        assert_eq!(local, shared);
    }

    #[test]
    fn mismatched_action_space_rejects_batch() {
        let mut q = QTable::new(3, &LearnerConfig::default());
        let s = LocalState::new(0, &[0, 0]);
        let err = q.incorporate_shared(&[obs(s, 0, s, 0.1, 0)]).unwrap_err();
        assert_eq!(err, Error::IncompatibleExperience { expected: 3, found: 2 });
        assert_eq!(q.rejected_batches(), 1);
        assert!(q.is_empty());
    }

    #[test]
    fn dump_round_trip() {
        let c = LearnerConfig::default();
        let mut q = QTable::new(4, &c);
        q.set_value(&LocalState::new(3, &[1, 2, 3, 4]), LocalAction::Forward(2), -0.25);
        q.set_value(&LocalState::new(0, &[0, 0, 0, 0]), LocalAction::ProcessLocally, 1.5);
        let mut buf = Vec::new();
        q.dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 10 + 2 * (4 + 5 * 8));
        let back = QTable::load(buf.as_slice(), &c).unwrap();
        assert_eq!(back, q);
        buf[4] = 9;
        assert!(QTable::load(buf.as_slice(), &c).is_err());
    }

    #[test]
    fn annealing_endpoints() {
        let c = LearnerConfig {
            tau_start: 1.0,
            tau_end: 0.1,
            ..LearnerConfig::default()
        };
        assert!((c.temperature(0, 100) - 1.0).abs() < 1e-12);
        assert!((c.temperature(100, 100) - 0.1).abs() < 1e-12);
        // geometric midpoint
        assert!((c.temperature(50, 100) - 0.1f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.temperature(500, 100), c.temperature(100, 100));
    }
}
