use std::fmt;
use std::io::{self, Write};

use crate::adversary::CostLedger;
use crate::state::CommitmentState;
use crate::timeline::Timeline;

pub const EPOCH_CSV_HEADER: &str =
    "epoch,window,W_H,W_A,leader_id,leader_class,empty_epoch,head_weight,chain_len,evidence_count";
pub const WINDOW_CSV_HEADER: &str = "window,X_d,adversary_capacity,honest_solves_total";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderClass {
    Honest,
    Adversarial,
}

impl fmt::Display for LeaderClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Honest => "honest",
            Self::Adversarial => "adversarial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: u64,
    pub window: u64,
    pub w_honest: f64,
    pub w_adversary: f64,
    pub leader: Option<u32>,
    pub leader_class: Option<LeaderClass>,
    pub bootstrap: bool,
    /// `W_A ≤ ρ·W_tot`
    pub honest_majority: bool,
    pub head_weight: f64,
    pub chain_len: u64,
    /// Cumulative equivocation evidence.
    pub evidence_count: u64,
}

impl EpochRow {
    pub fn empty_epoch(&self) -> bool {
        self.leader.is_none()
    }

    pub fn total_weight(&self) -> f64 {
        self.w_honest + self.w_adversary
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub window: u64,
    /// `X(d)`
    pub adversary_spent: u64,
    pub adversary_capacity: u64,
    pub honest_solves_total: u64,
    /// Machine solves credited to adversarial identities.
    pub automated_solves: u64,
    /// Adversarial identities credited fewer than the issued challenges.
    pub adversary_short: u32,
    pub issued_per_validator: u32,
}

/// One release of a withheld fork.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForkEvent {
    pub epoch: u64,
    pub private_blocks: u64,
    /// Public blocks orphaned by the release.
    pub displaced: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BftReport {
    pub voting_rounds: u64,
    pub finalized_blocks: u64,
    /// Heights at which two different blocks were both finalized.
    pub conflicting_finalizations: u64,
    /// `W_A < W_tot/3` held at every voting round.
    pub precondition_held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub timeline: Timeline,
    pub honest_count: u32,
    pub adversary_count: u32,
    pub seed: u64,
    pub epochs: Vec<EpochRow>,
    pub windows: Vec<WindowRow>,
    pub forks: Vec<ForkEvent>,
    pub bft: Option<BftReport>,
    pub cost: CostLedger,
    pub final_states: Vec<CommitmentState>,
    /// Per-epoch score vectors, when retained.
    pub scores: Option<Vec<Vec<f64>>>,
    /// Per-epoch leader positions.
    pub leaders: Vec<Option<u32>>,
}

impl ExperimentTrace {
    pub fn is_honest(&self, validator: u32) -> bool {
        validator < self.honest_count
    }

    pub fn write_epochs_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{EPOCH_CSV_HEADER}")?;
        for r in &self.epochs {
            let leader = r.leader.map(|l| l.to_string()).unwrap_or_default();
            let class = r.leader_class.map(|c| c.to_string()).unwrap_or_else(|| "none".into());
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.window,
                r.w_honest,
                r.w_adversary,
                leader,
                class,
                u8::from(r.empty_epoch()),
                r.head_weight,
                r.chain_len,
                r.evidence_count
            )?;
        }
        Ok(())
    }

    pub fn write_windows_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{WINDOW_CSV_HEADER}")?;
        for w in &self.windows {
            writeln!(
                out,
                "{},{},{},{}",
                w.window, w.adversary_spent, w.adversary_capacity, w.honest_solves_total
            )?;
        }
        Ok(())
    }
}
