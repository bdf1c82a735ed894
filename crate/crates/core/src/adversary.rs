//! Capacity-bounded Sybil adversary.
//!
//! A single controller runs `s` identities with `m` humans. Each window it
//! can solve at most `M = m·τ_h` challenges in total, split over its
//! identities by an [`AllocationStrategy`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::hco::{allocate_adversary, AllocationStrategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("online_policy: rotate fraction must lie in [0, 1], got {0}")]
    RotateFraction(f64),
    #[error("equivocate and private_fork cannot both be enabled")]
    ConflictingBehaviour,
}

/// Which identities stay online.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OnlinePolicy {
    #[default]
    AlwaysOnline,
    /// A fraction of identities is online each epoch; membership cycles
    /// every window.
    Rotate(f64),
    Offline,
}

impl fmt::Display for OnlinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AlwaysOnline => f.write_str("always_online"),
            Self::Rotate(frac) => write!(f, "rotate:{frac}"),
            Self::Offline => f.write_str("offline"),
        }
    }
}

impl FromStr for OnlinePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always_online" | "always-online" | "online" => Ok(Self::AlwaysOnline),
            "offline" => Ok(Self::Offline),
            _ => {
                let frac = s
                    .strip_prefix("rotate:")
                    .or_else(|| s.strip_prefix("rotate(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| format!("expected always_online|offline|rotate:<fraction>, got `{s}`"))?;
                let frac: f64 = frac.parse().map_err(|e| format!("rotate fraction: {e}"))?;
                Ok(Self::Rotate(frac))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryConfig {
    /// `s`
    pub identities: u32,
    /// `m`
    pub humans: u32,
    pub strategy: AllocationStrategy,
    pub online_policy: OnlinePolicy,
    /// Sign a second, conflicting block whenever an identity leads.
    pub equivocate: bool,
    /// Withhold blocks on a private fork and release it to reorganise the
    /// public chain.
    pub private_fork: bool,
    /// Public blocks the private fork may fall behind by before it is
    /// released regardless.
    pub fork_patience: u32,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            identities: 100,
            humans: 10,
            strategy: AllocationStrategy::Concentrate,
            online_policy: OnlinePolicy::AlwaysOnline,
            equivocate: false,
            private_fork: false,
            fork_patience: 10,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        if let OnlinePolicy::Rotate(f) = self.online_policy {
            if !(0.0..=1.0).contains(&f) {
                return Err(AdversaryError::RotateFraction(f));
            }
        }
        if self.equivocate && self.private_fork {
            return Err(AdversaryError::ConflictingBehaviour);
        }
        Ok(())
    }

    /// Per-window human-solve capacity `M = m·τ_h`.
    pub fn capacity(&self, tau_h: u32) -> u64 {
        u64::from(self.humans) * u64::from(tau_h)
    }

    /// Solve allocation for `window` under rate `k`.
    pub fn allocation(&self, tau_h: u32, k: u32, window: u64) -> Vec<u32> {
        allocate_adversary(
            self.identities as usize,
            self.capacity(tau_h),
            k,
            self.strategy,
            window,
        )
    }

    /// Online flags of the identities during `window`.
    pub fn online_set(&self, window: u64) -> Vec<bool> {
        let s = self.identities as usize;
        match self.online_policy {
            OnlinePolicy::AlwaysOnline => vec![true; s],
            OnlinePolicy::Offline => vec![false; s],
            OnlinePolicy::Rotate(frac) => {
                let mut online = vec![false; s];
                if s == 0 {
                    return online;
                }
                let count = ((frac * s as f64).ceil() as usize).min(s);
                let start = ((window % s as u64) as usize * count) % s;
                for i in 0..count {
                    online[(start + i) % s] = true;
                }
                online
            }
        }
    }
}

/// Cumulative adversarial cost counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    /// `Σ_d X(d)`
    pub human_time_spent: u64,
    pub node_epochs_online: u64,
    pub slash_events: u64,
    per_window: Vec<u64>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_window(&mut self, spent: u64) {
        self.human_time_spent += spent;
        self.per_window.push(spent);
    }

    pub fn record_online(&mut self, identities_online: u64) {
        self.node_epochs_online += identities_online;
    }

    pub fn record_slash(&mut self) {
        self.slash_events += 1;
    }

    /// `X(d)` for every completed window, in order.
    pub fn per_window(&self) -> &[u64] {
        &self.per_window
    }
}

/// `Σ X(d)` over the first `windows` completed windows.
pub fn total_human_time(ledger: &CostLedger, windows: usize) -> u64 {
    ledger.per_window.iter().take(windows).sum()
}

/// What a private-fork adversary does with its withheld chain after an
/// epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForkAction {
    Continue,
    /// Release; the fork outweighs the public blocks it competes with.
    Publish,
    /// Release a losing fork and start over from the public head.
    Abandon,
}

/// Race state of a withheld fork, measured from the common base block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForkRace {
    pub private_weight: f64,
    pub public_weight: f64,
    pub public_blocks: u64,
}

/// Release once doing so displaces at least one public block, give up after
/// `patience` public blocks, and release whatever is held at the horizon.
pub fn fork_decision(race: ForkRace, patience: u32, at_horizon: bool) -> ForkAction {
    if race.public_blocks >= 1 && race.private_weight > race.public_weight {
        ForkAction::Publish
    } else if at_horizon {
        if race.private_weight > race.public_weight {
            ForkAction::Publish
        } else {
            ForkAction::Abandon
        }
    } else if race.public_blocks > u64::from(patience) {
        ForkAction::Abandon
    } else {
        ForkAction::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hco::min_humans;
    use proptest::prelude::*;

    #[test]
    fn capacity_example() {
        let cfg = AdversaryConfig {
            identities: 100,
            humans: 10,
            ..Default::default()
        };
        let alloc = cfg.allocation(1, 1, 0);
        assert_eq!(alloc.iter().filter(|&&x| x == 1).count(), 10);
        assert_eq!(alloc.iter().sum::<u32>(), 10);
    }

    #[test]
    fn total_human_time_examples() {
        let mut full = CostLedger::new();
        for _ in 0..5 {
            let cfg = AdversaryConfig {
                identities: 10,
                humans: 10,
                ..Default::default()
            };
            full.record_window(cfg.allocation(1, 1, 0).iter().map(|&x| u64::from(x)).sum());
        }
        assert_eq!(total_human_time(&full, 5), 50);

        let mut zero = CostLedger::new();
        zero.record_window(0);
        assert_eq!(total_human_time(&zero, 1), 0);

        let cfg = AdversaryConfig::default();
        let mut conc = CostLedger::new();
        for w in 0..3 {
            conc.record_window(cfg.allocation(1, 1, w).iter().map(|&x| u64::from(x)).sum());
        }
        assert_eq!(total_human_time(&conc, 3), 30);
    }

    #[test]
    fn policy_parsing_and_validation() {
        assert_eq!("rotate:0.5".parse::<OnlinePolicy>(), Ok(OnlinePolicy::Rotate(0.5)));
        assert_eq!("rotate(0.25)".parse::<OnlinePolicy>(), Ok(OnlinePolicy::Rotate(0.25)));
        assert_eq!("offline".parse::<OnlinePolicy>(), Ok(OnlinePolicy::Offline));
        assert!("sometimes".parse::<OnlinePolicy>().is_err());
        let bad = AdversaryConfig {
            online_policy: OnlinePolicy::Rotate(1.5),
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(AdversaryError::RotateFraction(1.5)));
        let both = AdversaryConfig {
            equivocate: true,
            private_fork: true,
            ..Default::default()
        };
        assert_eq!(both.validate(), Err(AdversaryError::ConflictingBehaviour));
    }

    #[test]
    fn rotate_cycles_membership() {
        let cfg = AdversaryConfig {
            identities: 10,
            online_policy: OnlinePolicy::Rotate(0.5),
            ..Default::default()
        };
        let w0 = cfg.online_set(0);
        let w1 = cfg.online_set(1);
        assert_eq!(w0.iter().filter(|&&o| o).count(), 5);
        assert!(w0.iter().zip(&w1).all(|(a, b)| a != b));
        assert_eq!(cfg.online_set(2), w0);
    }

    #[test]
    fn fork_decisions() {
        let race = |p, q, n| ForkRace {
            private_weight: p,
            public_weight: q,
            public_blocks: n,
        };
        assert_eq!(fork_decision(race(3.0, 0.0, 0), 2, false), ForkAction::Continue);
        assert_eq!(fork_decision(race(3.0, 2.0, 1), 2, false), ForkAction::Publish);
        assert_eq!(fork_decision(race(3.0, 3.0, 1), 2, false), ForkAction::Continue);
        assert_eq!(fork_decision(race(1.0, 9.0, 3), 2, false), ForkAction::Abandon);
        assert_eq!(fork_decision(race(1.0, 9.0, 1), 2, true), ForkAction::Abandon);
        assert_eq!(fork_decision(race(1.0, 0.0, 0), 2, true), ForkAction::Publish);
    }

    proptest! {
        #[test]
        fn capacity_never_exceeded(
            s in 0u32..200,
            m in 0u32..200,
            tau_h in 1u32..6,
            k in 1u32..4,
            window in 0u64..1000,
            strat in 0usize..3,
        ) {
            let strategy = [
                AllocationStrategy::Concentrate,
                AllocationStrategy::Spread,
                AllocationStrategy::Rotate { period: 3 },
            ][strat];
            let cfg = AdversaryConfig { identities: s, humans: m, strategy, ..Default::default() };
            let alloc = cfg.allocation(tau_h, k, window);
            let spent: u64 = alloc.iter().map(|&x| u64::from(x)).sum();
            prop_assert!(spent <= cfg.capacity(tau_h));
            prop_assert!(alloc.iter().all(|&x| x <= k));
            let full = alloc.iter().all(|&x| x == k);
            if s > 0 && u64::from(m) < min_humans(u64::from(s), k, tau_h) {
                prop_assert!(!full);
            }
        }

        #[test]
        fn sublinear_starvation(s in 1u32..200, m in 0u32..200, window in 0u64..100, strat in 0usize..2) {
            prop_assume!(m < s);
            let strategy = [AllocationStrategy::Concentrate, AllocationStrategy::Spread][strat];
            let cfg = AdversaryConfig { identities: s, humans: m, strategy, ..Default::default() };
            let alloc = cfg.allocation(1, 1, window);
            prop_assert_eq!(alloc.iter().filter(|&&x| x == 0).count(), (s - m) as usize);
        }
    }
}
