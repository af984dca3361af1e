//! Context-based concurrent experience sharing for multi-agent task allocation.
//!
//! Agents on a lattice learn tabular Q-policies for routing tasks. Supervisors
//! periodically collect their subordinates' transitions and context features,
//! group contextually similar agents, and relay experiences within those
//! groups. See [`harness::run_experiment`] for the end-to-end loop.

pub mod context;
pub mod error;
pub mod harness;
pub mod learner;
pub mod rng;
pub mod sharing;
pub mod tasknet;
pub mod transport;

pub use error::{Error, Result};
