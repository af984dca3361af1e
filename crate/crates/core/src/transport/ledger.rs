use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CompressionMode, MessageClass};
use crate::error::{Error, Result};
use crate::tasknet::AgentId;

/// One transmitted message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Step at which the message was sent.
    pub step: u64,
    pub window: u32,
    pub supervisor: u32,
    /// Reporting agent for reports, recipient for shares.
    pub agent: AgentId,
    pub class: MessageClass,
    #[serde(with = "mode_label")]
    pub mode: CompressionMode,
    pub bytes: u64,
}

mod mode_label {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::transport::CompressionMode;

    pub fn serialize<S: Serializer>(mode: &CompressionMode, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(mode)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CompressionMode, D::Error> {
        let label = String::deserialize(d)?;
        if label == "lossless" {
            return Ok(CompressionMode::Lossless);
        }
        label
            .strip_prefix("lossy-r")
            .and_then(|r| r.parse().ok())
            .map(CompressionMode::Lossy)
            .ok_or_else(|| D::Error::custom(format!("unknown compression mode {label:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTotals {
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunicationSummary {
    pub steps: u64,
    pub total_bytes: u64,
    /// Keyed by `"<class>/<mode>"`.
    pub by_class: BTreeMap<String, ClassTotals>,
    pub supervisor_bytes: Vec<u64>,
    pub supervisor_share_bytes: Vec<u64>,
    pub subordinates: Vec<usize>,
    /// Share-class bytes per step per subordinate, averaged over supervisors.
    pub share_bytes_per_step_per_subordinate: f64,
    /// Mean over supervisors of total bytes per step.
    pub bytes_per_step_per_supervisor: f64,
}

/// Append-only record of every message that crossed the network.
#[derive(Debug, Clone, Default)]
pub struct CommunicationLedger {
    entries: Vec<LedgerEntry>,
}

impl CommunicationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes).sum()
    }

    pub fn class_bytes(&self, class: MessageClass) -> u64 {
        self.entries.iter().filter(|e| e.class == class).map(|e| e.bytes).sum()
    }

    /// Aggregates the ledger for a run of `steps` steps where supervisor `i`
    /// oversees `subordinates[i]` agents.
    pub fn summarize(&self, steps: u64, subordinates: &[usize]) -> Result<CommunicationSummary> {
        if steps == 0 {
            return Err(Error::InvalidConfiguration("cannot summarize a run of zero steps".into()));
        }
        let s = subordinates.len();
        let mut supervisor_bytes = vec![0u64; s];
        let mut supervisor_share_bytes = vec![0u64; s];
        let mut by_class: BTreeMap<String, ClassTotals> = BTreeMap::new();
        for e in &self.entries {
            let i = e.supervisor as usize;
            if i >= s {
                return Err(Error::InvalidConfiguration(format!("ledger names supervisor {i} of {s}")));
            }
            supervisor_bytes[i] += e.bytes;
            if e.class == MessageClass::Share {
                supervisor_share_bytes[i] += e.bytes;
            }
            let slot = by_class.entry(format!("{}/{}", e.class, e.mode)).or_default();
            slot.messages += 1;
            slot.bytes += e.bytes;
        }
        let per_sub: Vec<f64> = supervisor_share_bytes
            .iter()
            .zip(subordinates)
            .filter(|(_, &n)| n > 0)
            .map(|(&b, &n)| b as f64 / steps as f64 / n as f64)
            .collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let per_sup: Vec<f64> = supervisor_bytes.iter().map(|&b| b as f64 / steps as f64).collect();
        Ok(CommunicationSummary {
            steps,
            total_bytes: self.total_bytes(),
            by_class,
            share_bytes_per_step_per_subordinate: mean(&per_sub),
            bytes_per_step_per_supervisor: mean(&per_sup),
            supervisor_bytes,
            supervisor_share_bytes,
            subordinates: subordinates.to_vec(),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(e).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
