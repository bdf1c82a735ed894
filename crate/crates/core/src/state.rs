//! Commitment state `(H, P, U)`, protocol parameters and the deterministic
//! commitment dynamics.
//!
//! - Engagement `H` grows only at window boundaries, by `κ_h` per solved
//!   challenge.
//! - Participation `P` grows by `κ_p` per compliant epoch and is multiplied by
//!   the slash factor `δ` on a violation.
//! - Availability `U` grows by `κ_u` per online epoch and decays by `e^{-λ}`
//!   per offline epoch.
//!
//! The score used for election is `α·H + β·P + γ·U`.

use std::ops::Add;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("solved count {solved} exceeds the challenge rate {rate} of the window")]
    SolvedExceedsRate { solved: u32, rate: u32 },
    #[error("invalid protocol parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

/// Per-validator commitment state. All components are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommitmentState {
    pub engagement: f64,
    pub participation: f64,
    pub availability: f64,
}

impl CommitmentState {
    pub const ZERO: CommitmentState = CommitmentState {
        engagement: 0.0,
        participation: 0.0,
        availability: 0.0,
    };

    pub fn new(engagement: f64, participation: f64, availability: f64) -> Self {
        Self {
            engagement,
            participation,
            availability,
        }
    }

    pub fn is_non_negative(&self) -> bool {
        self.engagement >= 0.0 && self.participation >= 0.0 && self.availability >= 0.0
    }
}

impl Add for CommitmentState {
    type Output = CommitmentState;

    fn add(self, rhs: Self) -> Self {
        CommitmentState {
            engagement: self.engagement + rhs.engagement,
            participation: self.participation + rhs.participation,
            availability: self.availability + rhs.availability,
        }
    }
}

/// How participation evolves for an offline validator, which is neither
/// compliant nor violating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OfflineParticipation {
    /// `P` unchanged.
    #[default]
    Frozen,
    /// `P` grows as if compliant.
    Accrue,
    /// `P` is slashed as if violating.
    Slash,
}

impl FromStr for OfflineParticipation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frozen" => Ok(Self::Frozen),
            "accrue" => Ok(Self::Accrue),
            "slash" => Ok(Self::Slash),
            other => Err(format!("expected frozen|accrue|slash, got `{other}`")),
        }
    }
}

impl OfflineParticipation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Frozen => "frozen",
            Self::Accrue => "accrue",
            Self::Slash => "slash",
        }
    }
}

/// Scoring and dynamics constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// α
    pub weight_engagement: f64,
    /// β
    pub weight_participation: f64,
    /// γ
    pub weight_availability: f64,
    /// κ_h, engagement gained per solved challenge.
    pub boost_engagement: f64,
    /// κ_p
    pub boost_participation: f64,
    /// κ_u
    pub boost_availability: f64,
    /// λ, per-epoch availability decay exponent while offline.
    pub decay_rate: f64,
    /// δ ∈ (0, 1)
    pub slash_factor: f64,
    /// Θ, expected number of eligible leaders per epoch.
    pub leader_scale: f64,
    /// c, expected committee size.
    pub committee_scale: f64,
    /// Optional saturation of `U`. `None` leaves availability unbounded.
    pub availability_cap: Option<f64>,
    /// Per-window aging exponent applied to `H` before the boost; 0 disables.
    pub engagement_decay: f64,
    pub offline_participation: OfflineParticipation,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            weight_engagement: 1.0,
            weight_participation: 0.5,
            weight_availability: 0.1,
            boost_engagement: 1.0,
            boost_participation: 0.5,
            boost_availability: 0.2,
            decay_rate: 0.05,
            slash_factor: 0.1,
            leader_scale: 1.0,
            committee_scale: 10.0,
            availability_cap: None,
            engagement_decay: 0.0,
            offline_participation: OfflineParticipation::Frozen,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> StateError {
    StateError::InvalidParam {
        field,
        reason: reason.into(),
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), StateError> {
        let weights = [
            ("weight_engagement", self.weight_engagement),
            ("weight_participation", self.weight_participation),
            ("weight_availability", self.weight_availability),
        ];
        for (field, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(field, format!("must be finite and >= 0, got {w}")));
            }
        }
        if weights.iter().all(|(_, w)| *w == 0.0) {
            return Err(invalid("weight_engagement", "at least one weight must be > 0"));
        }
        let positives = [
            ("boost_engagement", self.boost_engagement),
            ("boost_participation", self.boost_participation),
            ("boost_availability", self.boost_availability),
            ("decay_rate", self.decay_rate),
            ("leader_scale", self.leader_scale),
            ("committee_scale", self.committee_scale),
        ];
        for (field, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.slash_factor > 0.0 && self.slash_factor < 1.0) {
            return Err(invalid(
                "slash_factor",
                format!("must lie in (0, 1), got {}", self.slash_factor),
            ));
        }
        if let Some(cap) = self.availability_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(invalid("availability_cap", format!("must be > 0, got {cap}")));
            }
        }
        if !(self.engagement_decay.is_finite() && self.engagement_decay >= 0.0) {
            return Err(invalid(
                "engagement_decay",
                format!("must be >= 0, got {}", self.engagement_decay),
            ));
        }
        Ok(())
    }
}

/// Commitment score `α·H + β·P + γ·U`.
pub fn compute_score(state: &CommitmentState, params: &ProtocolParams) -> f64 {
    params.weight_engagement * state.engagement
        + params.weight_participation * state.participation
        + params.weight_availability * state.availability
}

/// Per-epoch availability and participation update. `H` is untouched.
///
/// `compliant` only matters for online validators; offline validators follow
/// [`ProtocolParams::offline_participation`].
pub fn epoch_update(
    state: &CommitmentState,
    online: bool,
    compliant: bool,
    params: &ProtocolParams,
) -> CommitmentState {
    let availability = if online {
        let grown = state.availability + params.boost_availability;
        match params.availability_cap {
            Some(cap) => grown.min(cap),
            None => grown,
        }
    } else {
        state.availability * (-params.decay_rate).exp()
    };
    let accrue = state.participation + params.boost_participation;
    let slashed = params.slash_factor * state.participation;
    let participation = if online {
        if compliant {
            accrue
        } else {
            slashed
        }
    } else {
        match params.offline_participation {
            OfflineParticipation::Frozen => state.participation,
            OfflineParticipation::Accrue => accrue,
            OfflineParticipation::Slash => slashed,
        }
    };
    CommitmentState {
        engagement: state.engagement,
        participation,
        availability,
    }
}

/// Window-boundary engagement boost `H' = H + κ_h·x` for `x` solved
/// challenges out of the window's rate `k`.
pub fn window_update(
    state: &CommitmentState,
    solved: u32,
    rate: u32,
    params: &ProtocolParams,
) -> Result<CommitmentState, StateError> {
    if solved > rate {
        return Err(StateError::SolvedExceedsRate { solved, rate });
    }
    let aged = if params.engagement_decay > 0.0 {
        state.engagement * (-params.engagement_decay).exp()
    } else {
        state.engagement
    };
    Ok(CommitmentState {
        engagement: aged + params.boost_engagement * f64::from(solved),
        ..*state
    })
}

/// Multiplicative slashing penalty `P ← δ·P` applied for equivocation
/// evidence.
pub fn slash(state: &CommitmentState, params: &ProtocolParams) -> CommitmentState {
    CommitmentState {
        participation: params.slash_factor * state.participation,
        ..*state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn table() -> ProtocolParams {
        ProtocolParams::default()
    }

    #[test]
    fn score_examples() {
        let p = table();
        assert_eq!(compute_score(&CommitmentState::ZERO, &p), 0.0);
        let s = CommitmentState::new(2.0, 4.0, 1.0);
        assert!((compute_score(&s, &p) - 4.1).abs() < TOL);
        let s = CommitmentState::new(10.0, 0.0, 0.0);
        assert!((compute_score(&s, &p) - 10.0).abs() < TOL);
    }

    #[test]
    fn epoch_update_examples() {
        let p = table();
        let s = CommitmentState::new(0.0, 0.0, 1.0);
        let out = epoch_update(&s, false, true, &p);
        assert!((out.availability - 0.951_229_424_500_714).abs() < 1e-9);

        let s = CommitmentState::new(0.0, 10.0, 0.0);
        let out = epoch_update(&s, true, false, &p);
        assert!((out.participation - 1.0).abs() < TOL);

        let out = epoch_update(&CommitmentState::ZERO, true, true, &p);
        assert!((out.availability - 0.2).abs() < TOL);
        assert!((out.participation - 0.5).abs() < TOL);
    }

    #[test]
    fn offline_participation_policies() {
        let mut p = table();
        let s = CommitmentState::new(1.0, 10.0, 5.0);
        assert_eq!(epoch_update(&s, false, true, &p).participation, 10.0);
        p.offline_participation = OfflineParticipation::Accrue;
        assert_eq!(epoch_update(&s, false, false, &p).participation, 10.5);
        p.offline_participation = OfflineParticipation::Slash;
        assert!((epoch_update(&s, false, true, &p).participation - 1.0).abs() < TOL);
    }

    #[test]
    fn offline_and_violating_apply_both_rules() {
        let mut p = table();
        p.offline_participation = OfflineParticipation::Slash;
        let s = CommitmentState::new(3.0, 10.0, 2.0);
        let out = epoch_update(&s, false, false, &p);
        assert!((out.participation - 1.0).abs() < TOL);
        assert!((out.availability - 2.0 * (-0.05f64).exp()).abs() < TOL);
        assert_eq!(out.engagement, 3.0);
    }

    #[test]
    fn availability_cap_saturates() {
        let p = ProtocolParams {
            availability_cap: Some(1.0),
            ..table()
        };
        let s = CommitmentState::new(0.0, 0.0, 0.9);
        assert_eq!(epoch_update(&s, true, true, &p).availability, 1.0);
    }

    #[test]
    fn window_update_examples() {
        let p = table();
        let s = CommitmentState::new(3.0, 1.0, 1.0);
        assert_eq!(window_update(&s, 2, 2, &p).unwrap().engagement, 5.0);
        let s = CommitmentState::new(7.5, 0.0, 0.0);
        assert_eq!(window_update(&s, 0, 1, &p).unwrap().engagement, 7.5);
        assert_eq!(
            window_update(&CommitmentState::ZERO, 1, 1, &p)
                .unwrap()
                .engagement,
            1.0
        );
        assert_eq!(
            window_update(&CommitmentState::ZERO, 3, 2, &p),
            Err(StateError::SolvedExceedsRate { solved: 3, rate: 2 })
        );
    }

    #[test]
    fn engagement_decay_ages_before_boost() {
        let p = ProtocolParams {
            engagement_decay: 0.5,
            ..table()
        };
        let s = CommitmentState::new(4.0, 0.0, 0.0);
        let out = window_update(&s, 1, 1, &p).unwrap();
        assert!((out.engagement - (4.0 * (-0.5f64).exp() + 1.0)).abs() < TOL);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(table().validate().is_ok());
        let bad = ProtocolParams {
            slash_factor: 1.5,
            ..table()
        };
        assert!(matches!(
            bad.validate(),
            Err(StateError::InvalidParam { field: "slash_factor", .. })
        ));
        let bad = ProtocolParams {
            weight_engagement: 0.0,
            weight_participation: 0.0,
            weight_availability: 0.0,
            ..table()
        };
        assert!(bad.validate().is_err());
        let bad = ProtocolParams {
            decay_rate: 0.0,
            ..table()
        };
        assert!(bad.validate().is_err());
    }

    fn state_strategy() -> impl Strategy<Value = CommitmentState> {
        (0.0..1e4f64, 0.0..1e4f64, 0.0..1e4f64).prop_map(|(h, p, u)| CommitmentState::new(h, p, u))
    }

    proptest! {
        #[test]
        fn offline_decay_matches_closed_form(u in 0.0..1e3f64, lambda in 1e-3..2.0f64, k in 0u32..200) {
            let p = ProtocolParams { decay_rate: lambda, ..table() };
            let mut s = CommitmentState::new(0.0, 0.0, u);
            for _ in 0..k {
                s = epoch_update(&s, false, true, &p);
            }
            let expected = u * (-lambda * f64::from(k)).exp();
            prop_assert!((s.availability - expected).abs() <= 1e-9 * (1.0 + u));
        }

        #[test]
        fn repeated_slashes_are_geometric(pv in 0.0..1e4f64, delta in 0.01..0.99f64, n in 0i32..30) {
            let p = ProtocolParams { slash_factor: delta, ..table() };
            let mut s = CommitmentState::new(0.0, pv, 0.0);
            for _ in 0..n {
                s = slash(&s, &p);
            }
            prop_assert!((s.participation - pv * delta.powi(n)).abs() <= 1e-9 * (1.0 + pv));
        }

        #[test]
        fn score_is_linear(a in state_strategy(), b in state_strategy()) {
            let p = table();
            let lhs = compute_score(&(a + b), &p);
            let rhs = compute_score(&a, &p) + compute_score(&b, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn dynamics_keep_state_non_negative_and_h_monotone(
            s in state_strategy(),
            actions in proptest::collection::vec((any::<bool>(), any::<bool>(), 0u32..3), 1..50),
        ) {
            let p = table();
            let mut cur = s;
            for (online, compliant, solved) in actions {
                let before = cur.engagement;
                cur = epoch_update(&cur, online, compliant, &p);
                prop_assert_eq!(cur.engagement, before);
                cur = window_update(&cur, solved, 2, &p).unwrap();
                prop_assert!(cur.engagement >= before);
                prop_assert!(cur.is_non_negative());
            }
        }
    }
}
