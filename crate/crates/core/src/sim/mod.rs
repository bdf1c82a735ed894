//! Deterministic epoch-by-epoch simulator.
//!
//! Validators `0..honest.count` are honest; the adversary's identities
//! follow. Each epoch runs, in order: adversary step, availability and
//! participation updates, score recomputation, leader election, block
//! proposal and fork choice, equivocation slashing, optional finality voting
//! and, at window boundaries, challenge solving and engagement updates.

mod engine;
pub mod metrics;
mod trace;

use thiserror::Error;

use crate::adversary::AdversaryConfig;
use crate::election::TieBreak;
use crate::hco::HcoParams;
use crate::state::ProtocolParams;
use crate::timeline::Timeline;

pub use engine::run;
pub use trace::{
    BftReport, EpochRow, ExperimentTrace, ForkEvent, LeaderClass, WindowRow, EPOCH_CSV_HEADER,
    WINDOW_CSV_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invariant breach at epoch {epoch}: {what}")]
    Invariant { epoch: u64, what: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HonestConfig {
    /// `|H|`
    pub count: u32,
    /// Per-epoch probability that an honest validator is online.
    pub online_prob: f64,
}

impl Default for HonestConfig {
    fn default() -> Self {
        Self {
            count: 50,
            online_prob: 0.995,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectionConfig {
    pub tie_break: TieBreak,
    pub beacon_domain_tag: String,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        Self {
            tie_break: TieBreak::default(),
            beacon_domain_tag: "beacon".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Apply per-epoch availability and participation updates.
    pub epoch_dynamics: bool,
    /// Honest-majority monitor threshold `ρ`.
    pub rho: f64,
    /// Leading fraction of the horizon excluded from `p_min`.
    pub warmup: f64,
    /// Run the weighted finality gadget.
    pub bft: bool,
    /// Keep every epoch's score vector in the trace.
    pub retain_scores: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            epoch_dynamics: true,
            rho: 0.45,
            warmup: 0.1,
            bft: false,
            retain_scores: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub timeline: Timeline,
    pub protocol: ProtocolParams,
    pub hco: HcoParams,
    pub election: ElectionConfig,
    pub honest: HonestConfig,
    pub adversary: AdversaryConfig,
    pub sim: SimOptions,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            timeline: Timeline::new(1, 3000).expect("valid default timeline"),
            protocol: ProtocolParams::default(),
            hco: HcoParams::default(),
            election: ElectionConfig::default(),
            honest: HonestConfig::default(),
            adversary: AdversaryConfig::default(),
            sim: SimOptions::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |e: &dyn std::fmt::Display| SimError::Config(e.to_string());
        self.protocol.validate().map_err(|e| err(&e))?;
        self.hco.validate().map_err(|e| err(&e))?;
        self.adversary.validate().map_err(|e| err(&e))?;
        if self.honest.count == 0 {
            return Err(SimError::Config("honest.count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.honest.online_prob) {
            return Err(SimError::Config(format!(
                "honest.online_prob must lie in [0, 1], got {}",
                self.honest.online_prob
            )));
        }
        if !(self.sim.rho > 0.0 && self.sim.rho < 0.5) {
            return Err(SimError::Config(format!(
                "sim.rho must lie in (0, 0.5), got {}",
                self.sim.rho
            )));
        }
        if !(0.0..1.0).contains(&self.sim.warmup) {
            return Err(SimError::Config(format!(
                "sim.warmup must lie in [0, 1), got {}",
                self.sim.warmup
            )));
        }
        Ok(())
    }

    pub fn validators(&self) -> usize {
        self.honest.count as usize + self.adversary.identities as usize
    }
}
