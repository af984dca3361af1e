//! Messages exchanged between agents and supervisors, their wire encoding,
//! and byte accounting.

mod ledger;
mod lossy;
mod spline;
mod wire;

pub use ledger::{ClassTotals, CommunicationLedger, CommunicationSummary, LedgerEntry};
pub use lossy::{channel_count, compress_lossy, decompress_lossy, knot_positions, ChannelKnots, CompressedSeries};
pub use spline::NaturalSpline;
pub use wire::{decode, encode, HEADER_LEN, MAGIC, WIRE_VERSION};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::ContextFeatureVector;
use crate::learner::Observation;
use crate::tasknet::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageClass {
    /// Agent to supervisor: transitions and context features of one window.
    Report,
    /// Supervisor to agent: experiences relayed from sharing partners.
    Share,
}

impl MessageClass {
    pub(crate) fn code(self) -> u8 {
        match self {
            MessageClass::Report => 1,
            MessageClass::Share => 2,
        }
    }
}

impl fmt::Display for MessageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageClass::Report => "report",
            MessageClass::Share => "share",
        })
    }
}

/// How relayed experiences travel on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "degree")]
pub enum CompressionMode {
    Lossless,
    /// Spline compression keeping every `R`-th observation.
    Lossy(u32),
}

impl fmt::Display for CompressionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressionMode::Lossless => f.write_str("lossless"),
            CompressionMode::Lossy(r) => write!(f, "lossy-r{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMessage {
    pub agent: AgentId,
    pub window: u32,
    pub neighbor_count: u8,
    pub observations: Vec<Observation>,
    /// Per-step context features; `None` when the agent only reports transitions.
    pub features: Option<Vec<ContextFeatureVector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Raw(Vec<Observation>),
    Compressed(CompressedSeries),
}

impl Payload {
    pub fn build(observations: &[Observation], mode: CompressionMode) -> crate::Result<Self> {
        match mode {
            CompressionMode::Lossless => Ok(Payload::Raw(observations.to_vec())),
            CompressionMode::Lossy(r) => Ok(Payload::Compressed(compress_lossy(observations, r)?)),
        }
    }

    /// Observations as seen by the recipient.
    pub fn observations(&self, window: usize) -> crate::Result<Vec<Observation>> {
        match self {
            Payload::Raw(obs) => Ok(obs.clone()),
            Payload::Compressed(series) => decompress_lossy(series, window),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonorPayload {
    pub donor: AgentId,
    pub payload: Payload,
}

/// Experiences relayed to one recipient in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareMessage {
    pub recipient: AgentId,
    pub window: u32,
    pub neighbor_count: u8,
    pub donors: Vec<DonorPayload>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Report(ReportMessage),
    Share(ShareMessage),
}

impl Message {
    pub fn class(&self) -> MessageClass {
        match self {
            Message::Report(_) => MessageClass::Report,
            Message::Share(_) => MessageClass::Share,
        }
    }

    /// Encoded size in bytes.
    pub fn wire_len(&self) -> crate::Result<usize> {
        Ok(encode(self)?.len())
    }
}
