//! Discrete-time simulation of a lattice task-allocation network.
//!
//! Every agent owns a routing queue (tasks awaiting a decision) and a
//! processing queue (tasks it committed to). A step is:
//!
//! 1. [`TaskNetwork::generate_tasks`]: Poisson arrivals at source agents.
//! 2. The caller picks one [`LocalAction`] for the head of each non-empty
//!    routing queue.
//! 3. [`TaskNetwork::step`]: actions are committed serially in agent-id order,
//!    processing advances, completions are recorded and the clock ticks.

use std::collections::VecDeque;
use std::fmt;

use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{load_bucket, LocalState, Observation};
use crate::rng::{stream_rng, SimRng, Stream};

/// Completions considered by the system-wide service-time metric.
pub const METRIC_WINDOW: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Routing decision for the task at the head of an agent's routing queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalAction {
    ProcessLocally,
    /// Index into the acting agent's neighbor list.
    Forward(u8),
}

impl LocalAction {
    pub fn index(self) -> usize {
        match self {
            LocalAction::ProcessLocally => 0,
            LocalAction::Forward(j) => 1 + j as usize,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            LocalAction::ProcessLocally
        } else {
            LocalAction::Forward((i - 1) as u8)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concentration {
    Border,
    Center,
}

impl fmt::Display for Concentration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Concentration::Border => "border",
            Concentration::Center => "center",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub width: usize,
    pub concentration: Concentration,
    pub lambda: f64,
    pub seed: u64,
    /// Mean of the exponential task-duration law, before rounding up.
    pub mean_duration: f64,
    /// Service-time estimate used while an agent has no completions.
    pub prior_service_estimate: f64,
    /// Completion-history capacity per agent.
    pub history_window: usize,
    /// Head-of-queue tasks advanced per step in each processing queue.
    pub workers: usize,
    /// Side of the central source block; `ceil(width / 3)` when unset.
    pub center_block: Option<usize>,
    /// Trailing window (steps) for per-agent arrival-rate counters.
    pub rate_window: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            width: 10,
            concentration: Concentration::Border,
            lambda: 0.3,
            seed: 0,
            mean_duration: 10.0,
            prior_service_estimate: 10.0,
            history_window: 50,
            workers: 2,
            center_block: None,
            rate_window: 115,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfiguration(m));
        if self.width < 2 {
            return bad(format!("width must be at least 2, got {}", self.width));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be a finite nonnegative rate, got {}", self.lambda));
        }
        if !(self.mean_duration > 0.0) || !(self.prior_service_estimate > 0.0) {
            return bad("durations and service estimates must be positive".into());
        }
        if self.history_window == 0 || self.workers == 0 || self.rate_window == 0 {
            return bad("history_window, workers and rate_window must be positive".into());
        }
        if let Some(b) = self.center_block {
            if b == 0 || b > self.width {
                return bad(format!("center_block must lie in 1..={}", self.width));
            }
        }
        Ok(())
    }

    pub fn center_block_side(&self) -> usize {
        self.center_block.unwrap_or(self.width.div_ceil(3))
    }

    /// Whether lattice cell `(row, col)` receives tasks from the environment.
    pub fn is_source(&self, row: usize, col: usize) -> bool {
        let w = self.width;
        match self.concentration {
            Concentration::Border => row == 0 || col == 0 || row == w - 1 || col == w - 1,
            Concentration::Center => {
                let side = self.center_block_side();
                let lo = (w - side) / 2;
                (lo..lo + side).contains(&row) && (lo..lo + side).contains(&col)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub id: u64,
    /// Remaining work in steps.
    pub duration: u32,
    pub initial_duration: u32,
    pub created_at: u64,
    pub origin: AgentId,
    pub hops: u32,
}

/// Sliding per-step counter over a fixed trailing window.
#[derive(Debug, Clone)]
struct RateCounter {
    ring: VecDeque<u32>,
    window: usize,
    sum: u64,
    pending: u32,
}

impl RateCounter {
    fn new(window: usize) -> Self {
        Self {
            ring: VecDeque::with_capacity(window),
            window,
            sum: 0,
            pending: 0,
        }
    }

    fn bump(&mut self, n: u32) {
        self.pending += n;
    }

    fn close_step(&mut self) {
        if self.ring.len() == self.window {
            self.sum -= u64::from(self.ring.pop_front().unwrap());
        }
        self.ring.push_back(self.pending);
        self.sum += u64::from(self.pending);
        self.pending = 0;
    }

    fn rate(&self) -> f64 {
        self.sum as f64 / self.window as f64
    }
}

#[derive(Debug, Clone)]
pub struct AgentNode {
    pub id: AgentId,
    pub row: usize,
    pub col: usize,
    /// Neighbors in north, east, south, west order, absent sides skipped.
    pub neighbors: Vec<AgentId>,
    pub processing: VecDeque<Task>,
    pub routing: VecDeque<Task>,
    history: VecDeque<u32>,
    history_sum: u64,
    history_cap: usize,
    prior_estimate: f64,
    pub arrival_rate: f64,
    env_arrivals: RateCounter,
    agent_arrivals: RateCounter,
}

impl AgentNode {
    /// Backlog across both queues, in tasks.
    pub fn load(&self) -> usize {
        self.processing.len() + self.routing.len()
    }

    pub fn completion_history(&self) -> impl Iterator<Item = u32> + '_ {
        self.history.iter().copied()
    }

    fn record_completion(&mut self, service: u32) {
        if self.history.len() == self.history_cap {
            self.history_sum -= u64::from(self.history.pop_front().unwrap());
        }
        self.history.push_back(service);
        self.history_sum += u64::from(service);
    }

    /// Mean service time over the completion history, or the prior when empty.
    pub fn estimate_service_time(&self) -> f64 {
        if self.history.is_empty() {
            self.prior_estimate
        } else {
            self.history_sum as f64 / self.history.len() as f64
        }
    }

    /// Tasks per step this agent received from the environment (trailing window).
    pub fn env_rate(&self) -> f64 {
        self.env_arrivals.rate()
    }

    /// Tasks per step this agent received from other agents (trailing window).
    pub fn agent_rate(&self) -> f64 {
        self.agent_arrivals.rate()
    }
}

/// Loads and arrival rates visible to one agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSnapshot {
    pub agent: AgentId,
    pub t: u64,
    pub own_load: f64,
    pub neighbor_loads: Vec<f64>,
    pub neighbor_env_rates: Vec<f64>,
    pub neighbor_agent_rates: Vec<f64>,
}

/// Aggregate counters for one step, emitted by [`TaskNetwork::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub created: u32,
    pub completed: u32,
}

#[derive(Debug, Clone)]
pub struct TaskNetwork {
    cfg: NetworkConfig,
    pub agents: Vec<AgentNode>,
    time: u64,
    rng: SimRng,
    duration_law: Exp<f64>,
    next_task_id: u64,
    generated: u64,
    completed: u64,
    created_this_step: u32,
    recent: VecDeque<(u64, u32)>,
    recent_sum: u64,
}

impl TaskNetwork {
    /// Builds a `width x width` lattice with von Neumann adjacency.
    pub fn build_lattice(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.width;
        let mut agents = Vec::with_capacity(w * w);
        for row in 0..w {
            for col in 0..w {
                let id = |r: usize, c: usize| AgentId((r * w + c) as u32);
                let mut neighbors = Vec::with_capacity(4);
                if row > 0 {
                    neighbors.push(id(row - 1, col));
                }
                if col + 1 < w {
                    neighbors.push(id(row, col + 1));
                }
                if row + 1 < w {
                    neighbors.push(id(row + 1, col));
                }
                if col > 0 {
                    neighbors.push(id(row, col - 1));
                }
                agents.push(AgentNode {
                    id: id(row, col),
                    row,
                    col,
                    neighbors,
                    processing: VecDeque::new(),
                    routing: VecDeque::new(),
                    history: VecDeque::with_capacity(cfg.history_window),
                    history_sum: 0,
                    history_cap: cfg.history_window,
                    prior_estimate: cfg.prior_service_estimate,
                    arrival_rate: if cfg.is_source(row, col) { cfg.lambda } else { 0.0 },
                    env_arrivals: RateCounter::new(cfg.rate_window),
                    agent_arrivals: RateCounter::new(cfg.rate_window),
                });
            }
        }
        Ok(Self {
            rng: stream_rng(cfg.seed, Stream::Arrivals),
            duration_law: Exp::new(1.0 / cfg.mean_duration).expect("positive mean"),
            cfg,
            agents,
            time: 0,
            next_task_id: 0,
            generated: 0,
            completed: 0,
            created_this_step: 0,
            recent: VecDeque::new(),
            recent_sum: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn width(&self) -> usize {
        self.cfg.width
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agent(&self, id: AgentId) -> &AgentNode {
        &self.agents[id.index()]
    }

    pub fn sources(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().filter(|a| a.arrival_rate > 0.0).map(|a| a.id)
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Tasks currently queued anywhere in the network.
    pub fn queued(&self) -> usize {
        self.agents.iter().map(AgentNode::load).sum()
    }

    fn new_task(&mut self, origin: AgentId, duration: u32) -> Task {
        let task = Task {
            id: self.next_task_id,
            duration,
            initial_duration: duration,
            created_at: self.time,
            origin,
            hops: 0,
        };
        self.next_task_id += 1;
        self.generated += 1;
        task
    }

    /// Draws this step's environment arrivals and appends them to the
    /// routing queues of their source agents.
    pub fn generate_tasks(&mut self) -> Vec<Task> {
        let mut created = Vec::new();
        for i in 0..self.agents.len() {
            let lambda = self.agents[i].arrival_rate;
            if lambda <= 0.0 {
                continue;
            }
            let count = Poisson::new(lambda).expect("positive rate").sample(&mut self.rng) as u32;
            for _ in 0..count {
                let raw: f64 = self.duration_law.sample(&mut self.rng);
                let duration = (raw.ceil() as u32).max(1);
                let task = self.new_task(AgentId(i as u32), duration);
                self.agents[i].routing.push_back(task);
                created.push(task);
            }
            self.agents[i].env_arrivals.bump(count);
        }
        self.created_this_step += created.len() as u32;
        created
    }

    /// Places a task of the given duration on an agent's routing queue as if
    /// it had arrived from the environment this step.
    pub fn inject_task(&mut self, agent: AgentId, duration: u32) -> Task {
        let task = self.new_task(agent, duration.max(1));
        self.agents[agent.index()].routing.push_back(task);
        self.agents[agent.index()].env_arrivals.bump(1);
        self.created_this_step += 1;
        task
    }

    pub fn local_state(&self, id: AgentId) -> LocalState {
        let agent = self.agent(id);
        let nbrs: Vec<u8> = agent
            .neighbors
            .iter()
            .map(|n| load_bucket(self.agent(*n).load()))
            .collect();
        LocalState::new(load_bucket(agent.load()), &nbrs)
    }

    pub fn snapshot(&self, id: AgentId) -> NeighborhoodSnapshot {
        let agent = self.agent(id);
        let nbrs = agent.neighbors.iter().map(|n| self.agent(*n));
        NeighborhoodSnapshot {
            agent: id,
            t: self.time,
            own_load: agent.load() as f64,
            neighbor_loads: nbrs.clone().map(|n| n.load() as f64).collect(),
            neighbor_env_rates: nbrs.clone().map(AgentNode::env_rate).collect(),
            neighbor_agent_rates: nbrs.map(AgentNode::agent_rate).collect(),
        }
    }

    /// Agent that would receive the task if `actor` took `action`.
    pub fn receiver(&self, actor: AgentId, action: LocalAction) -> Result<AgentId> {
        match action {
            LocalAction::ProcessLocally => Ok(actor),
            LocalAction::Forward(j) => self
                .agent(actor)
                .neighbors
                .get(j as usize)
                .copied()
                .ok_or_else(|| Error::InvalidAction {
                    agent: actor.0,
                    reason: format!("neighbor index {j} out of range"),
                }),
        }
    }

    /// Reward `1/d` where `d` is the receiving agent's estimated service time.
    pub fn reward_for(&self, action: LocalAction, actor: AgentId) -> Result<f64> {
        let receiver = self.receiver(actor, action)?;
        Ok(1.0 / self.agent(receiver).estimate_service_time())
    }

    /// Commits one action per acting agent, advances processing by one step
    /// and returns one observation per committed action.
    ///
    /// `actions[i]` belongs to agent `i`; `Some` requires a non-empty routing
    /// queue. Invalid actions abort before any state changes.
    pub fn step(&mut self, actions: &[Option<LocalAction>]) -> Result<(Vec<(AgentId, Observation)>, StepStats)> {
        if actions.len() != self.agents.len() {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} action slots, got {}",
                self.agents.len(),
                actions.len()
            )));
        }
        let mut pending = Vec::new();
        for (i, action) in actions.iter().enumerate() {
            let Some(action) = *action else { continue };
            let actor = AgentId(i as u32);
            if self.agents[i].routing.is_empty() {
                return Err(Error::InvalidAction {
                    agent: actor.0,
                    reason: "no task awaiting a routing decision".into(),
                });
            }
            let receiver = self.receiver(actor, action)?;
            let reward = 1.0 / self.agent(receiver).estimate_service_time();
            pending.push((actor, action, receiver, self.local_state(actor), reward));
        }

        for &(actor, action, receiver, _, _) in &pending {
            let mut task = self.agents[actor.index()].routing.pop_front().expect("checked above");
            match action {
                LocalAction::ProcessLocally => self.agents[actor.index()].processing.push_back(task),
                LocalAction::Forward(_) => {
                    task.hops += 1;
                    let target = &mut self.agents[receiver.index()];
                    target.routing.push_back(task);
                    target.agent_arrivals.bump(1);
                }
            }
        }

        let finish = self.time + 1;
        let workers = self.cfg.workers;
        let mut completed = 0u32;
        for agent in &mut self.agents {
            let active = workers.min(agent.processing.len());
            let mut k = 0;
            let mut seen = 0;
            while seen < active {
                let task = &mut agent.processing[k];
                task.duration -= 1;
                seen += 1;
                if task.duration == 0 {
                    let done = agent.processing.remove(k).expect("index in range");
                    let service = (finish - done.created_at) as u32;
                    agent.record_completion(service);
                    self.recent.push_back((finish, service));
                    self.recent_sum += u64::from(service);
                    completed += 1;
                } else {
                    k += 1;
                }
            }
            agent.env_arrivals.close_step();
            agent.agent_arrivals.close_step();
        }
        self.completed += u64::from(completed);
        while let Some(&(at, service)) = self.recent.front() {
            if at + METRIC_WINDOW > finish {
                break;
            }
            self.recent.pop_front();
            self.recent_sum -= u64::from(service);
        }

        let t = self.time;
        self.time = finish;
        let stats = StepStats {
            created: std::mem::take(&mut self.created_this_step),
            completed,
        };
        let observations = pending
            .into_iter()
            .map(|(actor, action, _, state, reward)| {
                (
                    actor,
                    Observation {
                        state,
                        action,
                        next_state: self.local_state(actor),
                        reward: reward as f32,
                        t,
                    },
                )
            })
            .collect();
        Ok((observations, stats))
    }

    /// Mean service time of tasks completed during the last [`METRIC_WINDOW`]
    /// steps, `None` when nothing completed in that window.
    pub fn windowed_service_time(&self) -> Option<f64> {
        if self.recent.is_empty() {
            None
        } else {
            Some(self.recent_sum as f64 / self.recent.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(width: usize, concentration: Concentration, lambda: f64, seed: u64) -> TaskNetwork {
        TaskNetwork::build_lattice(NetworkConfig {
            width,
            concentration,
            lambda,
            seed,
            ..NetworkConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn lattice_degrees() {
        let n = net(5, Concentration::Border, 0.3, 0);
        for a in &n.agents {
            let edges = [a.row == 0, a.col == 0, a.row == 4, a.col == 4]
                .iter()
                .filter(|&&b| b)
                .count();
            assert_eq!(a.neighbors.len(), 4 - edges);
        }
    }

    #[test]
    fn border_sources_on_ten_by_ten() {
        let n = net(10, Concentration::Border, 0.3, 1);
        assert_eq!(n.len(), 100);
        assert_eq!(n.agents.iter().filter(|a| a.arrival_rate == 0.3).count(), 36);
        assert_eq!(n.agents.iter().filter(|a| a.arrival_rate == 0.0).count(), 64);
        assert_eq!(n.time(), 0);
        assert_eq!(n.queued(), 0);
    }

    #[test]
    fn two_by_two_all_border_no_arrivals() {
        let mut n = net(2, Concentration::Border, 0.0, 0);
        assert_eq!(n.len(), 4);
        assert!(n.agents.iter().all(|a| n.config().is_source(a.row, a.col)));
        for _ in 0..1000 {
            assert!(n.generate_tasks().is_empty());
            n.step(&[None; 4]).unwrap();
        }
        assert_eq!(n.generated(), 0);
    }

    #[test]
    fn center_block_matches_enumeration() {
        let n = net(27, Concentration::Center, 0.25, 7);
        assert_eq!(n.len(), 729);
        // ceil(27/3) = 9, centered: rows/cols 9..18
        let mut expected = 0;
        for r in 0..27usize {
            for c in 0..27usize {
                if (9..18).contains(&r) && (9..18).contains(&c) {
                    expected += 1;
                }
            }
        }
        assert_eq!(n.sources().count(), expected);
        assert!(n.sources().all(|s| n.agent(s).arrival_rate == 0.25));
    }

    #[test]
    fn rejects_narrow_lattice() {
        let err = TaskNetwork::build_lattice(NetworkConfig {
            width: 1,
            ..NetworkConfig::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfiguration(_)));
    }

    #[test]
    fn empty_step_advances_clock() {
        let mut n = net(3, Concentration::Border, 0.0, 0);
        let (obs, stats) = n.step(&[None; 9]).unwrap();
        assert!(obs.is_empty());
        assert_eq!(stats, StepStats::default());
        assert_eq!(n.time(), 1);
    }

    #[test]
    fn duration_three_completes_at_three() {
        let mut n = net(2, Concentration::Border, 0.0, 0);
        n.inject_task(AgentId(0), 3);
        let mut actions = [None; 4];
        actions[0] = Some(LocalAction::ProcessLocally);
        let (obs, _) = n.step(&actions).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].1.t, 0);
        n.step(&[None; 4]).unwrap();
        assert_eq!(n.completed(), 0);
        let (_, stats) = n.step(&[None; 4]).unwrap();
        assert_eq!(stats.completed, 1);
        assert_eq!(n.time(), 3);
        assert_eq!(n.agent(AgentId(0)).completion_history().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn invalid_neighbor_aborts_without_mutation() {
        let mut n = net(2, Concentration::Border, 0.0, 0);
        n.inject_task(AgentId(0), 2);
        let mut actions = [None; 4];
        actions[0] = Some(LocalAction::Forward(2));
        assert!(matches!(n.step(&actions), Err(Error::InvalidAction { agent: 0, .. })));
        assert_eq!(n.time(), 0);
        assert_eq!(n.agent(AgentId(0)).routing.len(), 1);
        actions[0] = None;
        actions[1] = Some(LocalAction::ProcessLocally);
        assert!(matches!(n.step(&actions), Err(Error::InvalidAction { agent: 1, .. })));
    }

    #[test]
    fn service_estimate_mean_and_prior() {
        let mut n = net(2, Concentration::Border, 0.0, 0);
        assert_eq!(n.agent(AgentId(0)).estimate_service_time(), 10.0);
        let a = &mut n.agents[0];
        a.record_completion(4);
        a.record_completion(6);
        assert_eq!(a.estimate_service_time(), 5.0);
    }

    #[test]
    fn service_estimate_uses_window() {
        let mut n = net(2, Concentration::Border, 0.0, 0);
        let a = &mut n.agents[0];
        let entries: Vec<u32> = (1..=80).collect();
        for &e in &entries {
            a.record_completion(e);
        }
        // capacity 50 keeps 31..=80
        let kept = &entries[30..];
        let mean = kept.iter().map(|&e| f64::from(e)).sum::<f64>() / kept.len() as f64;
        assert_eq!(a.completion_history().count(), 50);
        assert!((a.estimate_service_time() - mean).abs() < 1e-12);
    }

    #[test]
    fn reward_is_reciprocal_of_receiver_estimate() {
        let mut n = net(2, Concentration::Border, 0.0, 0);
        for (agent, value) in [(0usize, 25u32), (1, 1), (2, 100)] {
            n.agents[agent].record_completion(value);
        }
        let r = |action, actor| n.reward_for(action, AgentId(actor)).unwrap();
        assert!((r(LocalAction::ProcessLocally, 0) - 0.04).abs() < 1e-15);
        // agent 0 neighbors: east=1, south=2
        assert_eq!(r(LocalAction::Forward(0), 0), 1.0);
        assert!((r(LocalAction::Forward(1), 0) - 0.01).abs() < 1e-15);
        assert!(n.reward_for(LocalAction::Forward(2), AgentId(0)).is_err());
    }

    #[test]
    fn poisson_arrival_rate() {
        let mut n = net(2, Concentration::Border, 0.3, 42);
        let steps = 100_000;
        let mut count = 0usize;
        for _ in 0..steps {
            count += n.generate_tasks().len();
            n.agents.iter_mut().for_each(|a| a.routing.clear());
        }
        let per_agent = count as f64 / (steps as f64 * 4.0);
        assert!((per_agent - 0.3).abs() < 0.01, "{per_agent}");
    }

    #[test]
    fn duration_law_mean() {
        let n = net(2, Concentration::Border, 0.3, 9);
        let mut rng = stream_rng(9, Stream::Trial(0));
        let draws = 100_000;
        let mean: f64 = (0..draws).map(|_| n.duration_law.sample(&mut rng)).sum::<f64>() / draws as f64;
        assert!((mean - 10.0).abs() < 0.2, "{mean}");
    }

    #[test]
    fn all_local_drains_in_total_work_with_one_worker() {
        assert_eq!(drain_steps(1, &[4, 1, 7, 2]), 14);
    }

    #[test]
    fn two_workers_overlap_processing() {
        // hand trace, one task routed per step, two head tasks advance:
        // t0 [4]->[3]; t1 [3,1]->[2]; t2 [2,7]->[1,6]; t3 [1,6,2]->[5,2];
        // t4 [4,1]; t5 [3]; t6 [2]; t7 [1]; t8 done
        assert_eq!(drain_steps(2, &[4, 1, 7, 2]), 9);
    }

    fn drain_steps(workers: usize, work: &[u32]) -> u32 {
        let mut n = TaskNetwork::build_lattice(NetworkConfig {
            width: 3,
            lambda: 0.0,
            workers,
            ..NetworkConfig::default()
        })
        .unwrap();
        for &w in work {
            n.inject_task(AgentId(4), w);
        }
        let mut steps = 0;
        while n.queued() > 0 {
            let actions: Vec<_> = n
                .agents
                .iter()
                .map(|a| (!a.routing.is_empty()).then_some(LocalAction::ProcessLocally))
                .collect();
            n.step(&actions).unwrap();
            steps += 1;
        }
        steps
    }

    /// Straight-line re-simulation of a 2x2 lattice under a forward-ring
    /// policy, kept separate from `TaskNetwork::step`.
    #[test]
    fn forward_ring_matches_reference_model() {
        // ring 0 -> 1 -> 3 -> 2 -> 0 expressed as neighbor indices
        // agent 0: [E=1, S=2]; 1: [S=3, W=0]; 2: [N=0, E=3]; 3: [N=1, W=2]
        let ring_next = [1usize, 3, 0, 2];
        let ring_action = [0u8, 0, 0, 1];
        let mut n = net(2, Concentration::Border, 0.0, 0);
        for a in 0..4usize {
            let idx = n.agents[a].neighbors.iter().position(|x| x.index() == ring_next[a]).unwrap();
            assert_eq!(idx as u8, ring_action[a]);
        }

        // reference state: routing/processing as (remaining, hops, age_created)
        let mut routing: Vec<VecDeque<(u32, u32, u64)>> = vec![VecDeque::new(); 4];
        let mut processing: Vec<VecDeque<(u32, u32, u64)>> = vec![VecDeque::new(); 4];
        let mut completed = 0;
        for step in 0..50u64 {
            if step % 3 == 0 {
                let agent = (step / 3 % 4) as usize;
                let dur = 1 + (step % 5) as u32;
                n.inject_task(AgentId(agent as u32), dur);
                routing[agent].push_back((dur, 0, step));
            }
            // policy: forward unless the task already made 3 hops
            let mut actions = vec![None; 4];
            let mut moves = Vec::new();
            for a in 0..4 {
                if let Some(&(_, hops, _)) = routing[a].front() {
                    if hops >= 3 {
                        actions[a] = Some(LocalAction::ProcessLocally);
                        moves.push((a, None));
                    } else {
                        actions[a] = Some(LocalAction::Forward(ring_action[a]));
                        moves.push((a, Some(ring_next[a])));
                    }
                }
            }
            for (a, dest) in moves {
                let mut task = routing[a].pop_front().unwrap();
                match dest {
                    None => processing[a].push_back(task),
                    Some(d) => {
                        task.1 += 1;
                        routing[d].push_back(task);
                    }
                }
            }
            for q in processing.iter_mut() {
                if let Some(head) = q.front_mut() {
                    head.0 -= 1;
                    if head.0 == 0 {
                        q.pop_front();
                        completed += 1;
                    }
                }
            }
            n.step(&actions).unwrap();
            for a in 0..4 {
                assert_eq!(n.agents[a].routing.len(), routing[a].len(), "routing {a} at {step}");
                assert_eq!(n.agents[a].processing.len(), processing[a].len(), "processing {a} at {step}");
            }
            assert_eq!(n.completed(), completed);
            assert_eq!(n.generated(), n.completed() + n.queued() as u64);
        }
    }
}
