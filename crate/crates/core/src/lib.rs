//! Proof-of-Commitment (PoCmt) consensus primitive and experiment harness.
//!
//! Validator influence is derived from a commitment state `(H, P, U)`:
//! accumulated human engagement, protocol participation and online
//! availability. Engagement can only grow through identity-bound human
//! challenges whose per-window solve rate is bounded by the number of humans
//! involved, which makes sustaining `s` identities cost linear human-time.
//!
//! The crate is organised bottom-up:
//!
//! - [`timeline`]: epochs and human windows.
//! - [`state`]: commitment state, protocol parameters and dynamics.
//! - [`hco`]: human challenge oracle model with capacity accounting.
//! - [`election`]: commitment-weighted sortition and committee sampling.
//! - [`chain`]: blocks, weighted fork choice, equivocation evidence, finality.
//! - [`adversary`]: capacity-bounded Sybil adversary.
//! - [`sim`]: deterministic simulator, traces and metrics.
//! - [`config`], [`preset`]: experiment configuration, presets and CSV output.

pub mod adversary;
pub mod chain;
pub mod config;
pub mod election;
pub mod hco;
pub mod par;
pub mod preset;
pub mod rng;
pub mod sim;
pub mod state;
pub mod timeline;

use std::fmt;

/// Validator identifier. Honest validators are numbered first, Sybil
/// identities follow in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ValidatorId(pub u32);

impl ValidatorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub use adversary::{AdversaryConfig, CostLedger, OnlinePolicy};
pub use chain::{Block, BlockId, BlockStore, EquivocationEvidence, FinalityVote};
pub use election::{EpochRandomness, SortitionKey, TieBreak};
pub use hco::{AllocationStrategy, ChallengeSchedule, HcoParams, WindowLedger};
pub use sim::{ExperimentConfig, ExperimentTrace};
pub use state::{CommitmentState, ProtocolParams};
pub use timeline::Timeline;
