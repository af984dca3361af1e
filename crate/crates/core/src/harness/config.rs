use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::sharing::SharingConfig;
use crate::tasknet::NetworkConfig;
use crate::transport::CompressionMode;

/// How relayed experiences are carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    /// Relay in process without encoding; nothing is recorded in the ledger.
    None,
    Lossless,
    Lossy,
}

/// One experiment. Every field has a default, so a config file only needs
/// the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Number of supervisors; 0 disables sharing. Must be a perfect square.
    pub supervisors: usize,
    /// Steps between reports (K).
    pub reporting_interval: u64,
    /// Steps per run (T).
    pub horizon: u64,
    /// Runs per configuration; trial `i` uses seed `network.seed + i`.
    pub trials: usize,
    pub compression: Compression,
    /// Compression degree R for lossy relays.
    pub compression_degree: u32,
    /// Scale of the Gaussian noise added to context summaries, in units of
    /// the per-component deviation across the supervisory group.
    pub noise_level: f64,
    pub network: NetworkConfig,
    pub learner: LearnerConfig,
    pub sharing: SharingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            supervisors: 1,
            reporting_interval: 115,
            horizon: 10_000,
            trials: 1,
            compression: Compression::Lossless,
            compression_degree: 15,
            noise_level: 0.0,
            network: NetworkConfig::default(),
            learner: LearnerConfig::default(),
            sharing: SharingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfiguration(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfiguration(m));
        self.network.validate()?;
        self.learner.validate()?;
        self.sharing.validate()?;
        let side = supervisor_side(self.supervisors);
        if side * side != self.supervisors {
            return bad(format!("supervisors must be a perfect square, got {}", self.supervisors));
        }
        if side > self.network.width {
            return bad(format!(
                "{} supervisors need at least a {side}x{side} lattice",
                self.supervisors
            ));
        }
        if self.reporting_interval == 0 {
            return bad("reporting_interval must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.compression == Compression::Lossy && self.compression_degree == 0 {
            return bad("compression_degree must be positive".into());
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise_level must be finite and nonnegative, got {}", self.noise_level));
        }
        Ok(())
    }

    /// Wire mode for relays, `None` when relays are not encoded.
    pub fn relay_mode(&self) -> Option<CompressionMode> {
        match self.compression {
            Compression::None => None,
            Compression::Lossless => Some(CompressionMode::Lossless),
            Compression::Lossy => Some(CompressionMode::Lossy(self.compression_degree)),
        }
    }

    /// Content hash of the configuration, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Configuration of trial `i`.
    pub fn trial(&self, i: usize) -> Self {
        let mut cfg = self.clone();
        cfg.network.seed = self.network.seed.wrapping_add(i as u64);
        cfg.trials = 1;
        cfg
    }
}

pub(crate) fn supervisor_side(supervisors: usize) -> usize {
    (supervisors as f64).sqrt().round() as usize
}
