use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{supervisor_side, ExperimentConfig};
use super::supervision::{grid_partition, SupervisoryGroup};
use crate::context::{component_std, compute_features, inject_noise, summarize_window, ContextFeatureVector, ContextSummary};
use crate::error::Result;
use crate::learner::{Observation, QTable};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::sharing::{plan_window, SplitRecord};
use crate::tasknet::{AgentId, TaskNetwork};
use crate::transport::{
    encode, CommunicationLedger, CommunicationSummary, CompressionMode, DonorPayload, LedgerEntry, Message,
    MessageClass, Payload, ReportMessage, ShareMessage,
};

/// One simulated step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub created: u32,
    pub completed: u32,
    /// Mean service time of tasks completed in the trailing metric window;
    /// empty until the first completion.
    pub service_time: Option<f64>,
    pub queued: u64,
}

/// Sharing activity of one supervisor in one reporting window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub step: u64,
    pub window: u32,
    pub supervisor: u32,
    pub reporters: usize,
    pub sharing_agents: usize,
    /// Undirected sharing links chosen this window.
    pub edges: Vec<(AgentId, AgentId)>,
    /// Wall-clock time spent selecting partners.
    pub plan_micros: u64,
    pub relayed_observations: usize,
    pub report_bytes: u64,
    pub share_bytes: u64,
    pub splits: Vec<SplitRecord>,
}

/// Everything recorded by one run.
#[derive(Debug, Clone)]
pub struct MetricsLog {
    pub config: ExperimentConfig,
    pub rows: Vec<StepRow>,
    pub windows: Vec<WindowRecord>,
    pub ledger: CommunicationLedger,
    /// Subordinate count per supervisor, in supervisor order.
    pub subordinates: Vec<usize>,
    pub generated: u64,
    pub completed: u64,
    pub wall_time_secs: f64,
}

impl MetricsLog {
    pub fn service_curve(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.service_time).collect()
    }

    pub fn communication(&self) -> CommunicationSummary {
        self.ledger
            .summarize(self.rows.len().max(1) as u64, &self.subordinates)
            .expect("ledger names only configured supervisors")
    }
}

struct SupervisorState {
    group: SupervisoryGroup,
    sharing_rng: SimRng,
    noise_rng: SimRng,
}

/// Runs one experiment to its horizon.
///
/// Each step: environment arrivals, per-agent context features, one routing
/// decision per agent holding a task, local Q-updates. Every
/// `reporting_interval` steps each supervisor gathers its block's window,
/// selects sharing partners, and relays partner experiences, which recipients
/// fold into their Q-tables.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsLog> {
    cfg.validate()?;
    let started = Instant::now();
    let seed = cfg.network.seed;
    let mut net = TaskNetwork::build_lattice(cfg.network.clone())?;
    let n = net.len();
    let mut tables: Vec<QTable> = net
        .agents
        .iter()
        .map(|a| QTable::new(a.neighbors.len(), &cfg.learner))
        .collect();
    let mut policy_rng = stream_rng(seed, Stream::Policy);
    let mut supervisors: Vec<SupervisorState> = grid_partition(cfg.network.width, supervisor_side(cfg.supervisors))
        .into_iter()
        .map(|group| SupervisorState {
            sharing_rng: stream_rng(seed, Stream::Sharing(group.index)),
            noise_rng: stream_rng(seed, Stream::Noise(group.index)),
            group,
        })
        .collect();
    let sharing = !supervisors.is_empty();
    let k = cfg.reporting_interval;
    let horizon = cfg.horizon;

    let mut obs_buf: Vec<Vec<Observation>> = vec![Vec::new(); n];
    let mut feat_buf: Vec<Vec<ContextFeatureVector>> = vec![Vec::new(); n];
    let mut actions = vec![None; n];
    let mut rows = Vec::with_capacity(horizon as usize);
    let mut windows = Vec::new();
    let mut ledger = CommunicationLedger::new();
    let mut window = 0u32;

    for t in 0..horizon {
        net.generate_tasks();
        if sharing {
            for (i, buf) in feat_buf.iter_mut().enumerate() {
                buf.push(compute_features(&net.snapshot(AgentId(i as u32))));
            }
        }
        let tau = cfg.learner.temperature(t, horizon);
        for (i, slot) in actions.iter_mut().enumerate() {
            let id = AgentId(i as u32);
            *slot = if net.agent(id).routing.is_empty() {
                None
            } else {
                Some(tables[i].select_action(&net.local_state(id), tau, &mut policy_rng))
            };
        }
        let (observations, stats) = net.step(&actions)?;
        for (id, o) in observations {
            tables[id.index()].update(&o);
            if sharing {
                obs_buf[id.index()].push(o);
            }
        }
        rows.push(StepRow {
            step: t,
            created: stats.created,
            completed: stats.completed,
            service_time: net.windowed_service_time(),
            queued: net.queued() as u64,
        });

        if sharing && (t + 1) % k == 0 {
            let mut deliveries: Vec<(AgentId, Vec<Observation>)> = Vec::new();
            for sup in &mut supervisors {
                let record = share_round(cfg, t, window, sup, &net, &obs_buf, &feat_buf, &mut ledger, &mut deliveries)?;
                windows.push(record);
            }
            for (agent, batch) in deliveries {
                tables[agent.index()].incorporate_shared(&batch)?;
            }
            obs_buf.iter_mut().for_each(Vec::clear);
            feat_buf.iter_mut().for_each(Vec::clear);
            window += 1;
        }
    }

    Ok(MetricsLog {
        config: cfg.clone(),
        rows,
        windows,
        subordinates: supervisors.iter().map(|s| s.group.subordinates()).collect(),
        ledger,
        generated: net.generated(),
        completed: net.completed(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[allow(clippy::too_many_arguments)]
fn share_round(
    cfg: &ExperimentConfig,
    t: u64,
    window: u32,
    sup: &mut SupervisorState,
    net: &TaskNetwork,
    obs_buf: &[Vec<Observation>],
    feat_buf: &[Vec<ContextFeatureVector>],
    ledger: &mut CommunicationLedger,
    deliveries: &mut Vec<(AgentId, Vec<Observation>)>,
) -> Result<WindowRecord> {
    let mode = cfg.relay_mode();
    let group = &sup.group;
    let neighbor_count = |id: AgentId| net.agent(id).neighbors.len() as u8;
    let mut record = WindowRecord {
        step: t,
        window,
        supervisor: group.index,
        reporters: group.members.len(),
        sharing_agents: 0,
        edges: Vec::new(),
        plan_micros: 0,
        relayed_observations: 0,
        report_bytes: 0,
        share_bytes: 0,
        splits: Vec::new(),
    };
    let mut log = |agent: AgentId, class: MessageClass, mode: CompressionMode, msg: &Message| -> Result<u64> {
        // the supervisor's own report and relay never leave the node
        let bytes = if agent == group.supervisor { 0 } else { encode(msg)?.len() as u64 };
        ledger.record(LedgerEntry {
            step: t,
            window,
            supervisor: group.index,
            agent,
            class,
            mode,
            bytes,
        });
        Ok(bytes)
    };

    if mode.is_some() {
        for &m in &group.members {
            let msg = Message::Report(ReportMessage {
                agent: m,
                window,
                neighbor_count: neighbor_count(m),
                observations: obs_buf[m.index()].clone(),
                features: Some(feat_buf[m.index()].clone()),
            });
            record.report_bytes += log(m, MessageClass::Report, CompressionMode::Lossless, &msg)?;
        }
    }

    let mut summaries: Vec<ContextSummary> = group
        .members
        .iter()
        .map(|&m| summarize_window(m, &feat_buf[m.index()]))
        .collect::<Result<_>>()?;
    if cfg.noise_level > 0.0 {
        let mut by_count: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in summaries.iter().enumerate() {
            by_count.entry(s.neighbor_count).or_default().push(i);
        }
        for idx in by_count.values() {
            let split: Vec<ContextSummary> = idx.iter().map(|&i| summaries[i].clone()).collect();
            let std = component_std(&split);
            for &i in idx {
                summaries[i] = inject_noise(&summaries[i], cfg.noise_level, &std, &mut sup.noise_rng);
            }
        }
    }
    let entries: Vec<(ContextSummary, &[ContextFeatureVector])> = summaries
        .into_iter()
        .map(|s| {
            let f = feat_buf[s.agent.index()].as_slice();
            (s, f)
        })
        .collect();
    let planning = Instant::now();
    let plan = plan_window(&entries, &cfg.sharing, &mut sup.sharing_rng);
    record.plan_micros = planning.elapsed().as_micros() as u64;
    record.splits = plan.splits;
    record.edges = plan.map.edges();

    let mut payloads: BTreeMap<AgentId, (Payload, Vec<Observation>)> = BTreeMap::new();
    for recipient in plan.map.sharing_agents().collect::<Vec<_>>() {
        record.sharing_agents += 1;
        let mut donors = Vec::new();
        let mut received = Vec::new();
        for donor in plan.map.partners(recipient) {
            let window_obs = &obs_buf[donor.index()];
            if window_obs.is_empty() {
                continue;
            }
            if let Entry::Vacant(slot) = payloads.entry(donor) {
                let entry = match mode {
                    Some(m) => {
                        let payload = Payload::build(window_obs, m)?;
                        let seen = payload.observations(cfg.reporting_interval as usize)?;
                        (payload, seen)
                    }
                    None => (Payload::Raw(Vec::new()), window_obs.clone()),
                };
                slot.insert(entry);
            }
            let (payload, seen) = &payloads[&donor];
            received.extend_from_slice(seen);
            if mode.is_some() {
                donors.push(DonorPayload {
                    donor,
                    payload: payload.clone(),
                });
            }
        }
        if received.is_empty() {
            continue;
        }
        if let Some(m) = mode {
            let msg = Message::Share(ShareMessage {
                recipient,
                window,
                neighbor_count: neighbor_count(recipient),
                donors,
            });
            record.share_bytes += log(recipient, MessageClass::Share, m, &msg)?;
        }
        record.relayed_observations += received.len();
        deliveries.push((recipient, received));
    }
    Ok(record)
}
