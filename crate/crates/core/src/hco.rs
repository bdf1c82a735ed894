//! Human Challenge Oracle model.
//!
//! Challenges are represented as per-window solve counts. Each validator is
//! issued `k(d)` identity-bound challenges in window `d`; solutions count
//! only for the identity and window they were issued to. An adversary with
//! `m` humans, each able to solve `τ_h` challenges per window, can solve at
//! most `M = m·τ_h` challenges per window across all of its identities.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::ValidatorId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HcoError {
    #[error("validator {validator} credited {solved} solves but only {issued} challenges were issued")]
    ExceedsIssued {
        validator: ValidatorId,
        solved: u32,
        issued: u32,
    },
    #[error("validator {validator} already has solves recorded for window {window}")]
    AlreadyRecorded { validator: ValidatorId, window: u64 },
    #[error("adversary spent {spent} solves in window {window}, capacity is {capacity}")]
    CapacityExceeded {
        window: u64,
        spent: u64,
        capacity: u64,
    },
    #[error("invalid hco parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

/// Challenge rate `k(d)` per window: a constant, or a schedule cycled by
/// window index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChallengeSchedule {
    Constant(u32),
    Cycle(Vec<u32>),
}

impl ChallengeSchedule {
    pub fn rate(&self, window: u64) -> u32 {
        match self {
            Self::Constant(k) => *k,
            Self::Cycle(ks) => ks[(window % ks.len() as u64) as usize],
        }
    }

    pub fn max_rate(&self) -> u32 {
        match self {
            Self::Constant(k) => *k,
            Self::Cycle(ks) => ks.iter().copied().max().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<(), HcoError> {
        let ok = match self {
            Self::Constant(k) => *k >= 1,
            Self::Cycle(ks) => !ks.is_empty() && ks.iter().all(|k| *k >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(HcoError::InvalidParam {
                field: "challenge_rate",
                reason: "every rate must be >= 1".into(),
            })
        }
    }
}

impl fmt::Display for ChallengeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(k) => write!(f, "{k}"),
            Self::Cycle(ks) => {
                let parts: Vec<String> = ks.iter().map(u32::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for ChallengeSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ks = s
            .split(',')
            .map(|p| p.trim().parse::<u32>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match ks.as_slice() {
            [] => Err("empty schedule".into()),
            [k] => Ok(Self::Constant(*k)),
            _ => Ok(Self::Cycle(ks)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcoParams {
    /// Per-challenge success probability of an honest human.
    pub honest_solve_prob: f64,
    /// ε(d): per-challenge success of an automated solver. Machine solves
    /// sit outside the human-time ledger.
    pub automated_solve_prob: f64,
    pub challenge_rate: ChallengeSchedule,
    /// τ_h: challenges one human can solve per window.
    pub tau_h: u32,
}

impl Default for HcoParams {
    fn default() -> Self {
        Self {
            honest_solve_prob: 0.98,
            automated_solve_prob: 0.0,
            challenge_rate: ChallengeSchedule::Constant(1),
            tau_h: 1,
        }
    }
}

impl HcoParams {
    pub fn validate(&self) -> Result<(), HcoError> {
        for (field, p) in [
            ("honest_solve_prob", self.honest_solve_prob),
            ("automated_solve_prob", self.automated_solve_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HcoError::InvalidParam {
                    field,
                    reason: format!("probability must lie in [0, 1], got {p}"),
                });
            }
        }
        if self.tau_h == 0 {
            return Err(HcoError::InvalidParam {
                field: "tau_h",
                reason: "must be >= 1".into(),
            });
        }
        self.challenge_rate.validate()
    }
}

/// How the adversary distributes its per-window solve capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationStrategy {
    /// Fill identities in creation order up to `k` each.
    Concentrate,
    /// Hand out one solve at a time round-robin.
    Spread,
    /// Concentrate, with the starting identity advancing by one every
    /// `period` windows.
    Rotate { period: u32 },
}

impl fmt::Display for AllocationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Concentrate => f.write_str("concentrate"),
            Self::Spread => f.write_str("spread"),
            Self::Rotate { period } => write!(f, "rotate:{period}"),
        }
    }
}

impl FromStr for AllocationStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concentrate" => Ok(Self::Concentrate),
            "spread" => Ok(Self::Spread),
            "rotate" => Ok(Self::Rotate { period: 1 }),
            _ => {
                let period = s
                    .strip_prefix("rotate:")
                    .ok_or_else(|| format!("expected concentrate|spread|rotate[:period], got `{s}`"))?;
                let period: u32 = period.parse().map_err(|e| format!("rotate period: {e}"))?;
                if period == 0 {
                    return Err("rotate period must be >= 1".into());
                }
                Ok(Self::Rotate { period })
            }
        }
    }
}

/// Number of challenges an honest validator solves out of `k`: one
/// binomial(k, p) draw from `rng`.
pub fn honest_solves<R: Rng + ?Sized>(k: u32, p: f64, rng: &mut R) -> u32 {
    if k == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return k;
    }
    // p lies in (0, 1) here, so construction cannot fail.
    let dist = Binomial::new(u64::from(k), p).expect("valid binomial parameters");
    dist.sample(rng) as u32
}

/// Split the adversary's capacity `M` over `identities` Sybils in window
/// `window`. The result is indexed by identity ordinal, sums to
/// `min(M, identities·k)` and never exceeds `k` per identity.
pub fn allocate_adversary(
    identities: usize,
    capacity: u64,
    k: u32,
    strategy: AllocationStrategy,
    window: u64,
) -> Vec<u32> {
    let mut alloc = vec![0u32; identities];
    if identities == 0 || k == 0 {
        return alloc;
    }
    let total = capacity.min(identities as u64 * u64::from(k));
    match strategy {
        AllocationStrategy::Spread => {
            let base = (total / identities as u64) as u32;
            let extra = (total % identities as u64) as usize;
            for (i, a) in alloc.iter_mut().enumerate() {
                *a = base + u32::from(i < extra);
            }
        }
        AllocationStrategy::Concentrate | AllocationStrategy::Rotate { .. } => {
            let start = match strategy {
                AllocationStrategy::Rotate { period } => {
                    ((window / u64::from(period)) % identities as u64) as usize
                }
                _ => 0,
            };
            let mut left = total;
            for offset in 0..identities {
                if left == 0 {
                    break;
                }
                let give = left.min(u64::from(k));
                alloc[(start + offset) % identities] = give as u32;
                left -= give;
            }
        }
    }
    alloc
}

/// Minimum humans needed for every one of `s` identities to solve all `k`
/// challenges in one window: `ceil(s·k / τ_h)`.
pub fn min_humans(s: u64, k: u32, tau_h: u32) -> u64 {
    (s * u64::from(k)).div_ceil(u64::from(tau_h))
}

/// Solve accounting for one window.
///
/// Invariants enforced on every insertion: no identity is credited more than
/// the issued rate, and the adversary's human-solved total `X(d)` never
/// exceeds its capacity `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLedger {
    window: u64,
    issued_per_validator: u32,
    solved: BTreeMap<ValidatorId, u32>,
    automated: BTreeMap<ValidatorId, u32>,
    adversary_spent: u64,
    adversary_capacity: u64,
}

impl WindowLedger {
    pub fn new(window: u64, issued_per_validator: u32, adversary_capacity: u64) -> Self {
        Self {
            window,
            issued_per_validator,
            solved: BTreeMap::new(),
            automated: BTreeMap::new(),
            adversary_spent: 0,
            adversary_capacity,
        }
    }

    fn insert(&mut self, validator: ValidatorId, solved: u32) -> Result<(), HcoError> {
        if solved > self.issued_per_validator {
            return Err(HcoError::ExceedsIssued {
                validator,
                solved,
                issued: self.issued_per_validator,
            });
        }
        if self.solved.contains_key(&validator) {
            return Err(HcoError::AlreadyRecorded {
                validator,
                window: self.window,
            });
        }
        self.solved.insert(validator, solved);
        Ok(())
    }

    pub fn record_honest(&mut self, validator: ValidatorId, solved: u32) -> Result<(), HcoError> {
        self.insert(validator, solved)
    }

    /// Credit human-solved challenges to an adversarial identity. Fails
    /// without modifying the ledger if the capacity would be exceeded.
    pub fn record_adversary(&mut self, validator: ValidatorId, solved: u32) -> Result<(), HcoError> {
        let spent = self.adversary_spent + u64::from(solved);
        if spent > self.adversary_capacity {
            return Err(HcoError::CapacityExceeded {
                window: self.window,
                spent,
                capacity: self.adversary_capacity,
            });
        }
        self.insert(validator, solved)?;
        self.adversary_spent = spent;
        Ok(())
    }

    /// Add machine solves on top of an identity's human solves. Kept out of
    /// `X(d)`; the per-identity total still cannot exceed the issued rate.
    pub fn record_automated(&mut self, validator: ValidatorId, extra: u32) -> Result<(), HcoError> {
        let human = self.solved.get(&validator).copied().unwrap_or(0);
        if human + extra > self.issued_per_validator {
            return Err(HcoError::ExceedsIssued {
                validator,
                solved: human + extra,
                issued: self.issued_per_validator,
            });
        }
        if extra > 0 {
            self.automated.insert(validator, extra);
        }
        Ok(())
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn issued_per_validator(&self) -> u32 {
        self.issued_per_validator
    }

    /// `X(d)`
    pub fn adversary_spent(&self) -> u64 {
        self.adversary_spent
    }

    /// `M = m·τ_h`
    pub fn adversary_capacity(&self) -> u64 {
        self.adversary_capacity
    }

    /// Human solves credited to `validator`.
    pub fn solved(&self, validator: ValidatorId) -> u32 {
        self.solved.get(&validator).copied().unwrap_or(0)
    }

    /// Human plus machine solves credited to `validator`.
    pub fn total_solved(&self, validator: ValidatorId) -> u32 {
        self.solved(validator) + self.automated.get(&validator).copied().unwrap_or(0)
    }

    pub fn automated_total(&self) -> u64 {
        self.automated.values().map(|&x| u64::from(x)).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (ValidatorId, u32)> + '_ {
        self.solved.iter().map(|(v, x)| (*v, *x))
    }
}
