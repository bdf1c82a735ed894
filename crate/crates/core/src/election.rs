//! Commitment-weighted sortition.
//!
//! Each validator draws a private pseudorandom value `r_v(t) ∈ [0, 1)` from
//! its key, the epoch and the epoch beacon. It is eligible to lead when
//! `r_v(t) < τ_v(t) = min(1, Θ·CS_v / ΣCS)`. Committee membership uses the
//! same construction under a separate hash domain with probability
//! `min(1, c·CS_v / ΣCS)`.
//!
//! The pseudorandom function is a keyed SHA-256 standing in for a VRF; it
//! has the same interface and uniformity but no proofs.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{keyed_hash, uniform_index, unit_interval};
use crate::ValidatorId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectionError {
    #[error("beacon is for epoch {beacon} but sortition was requested for epoch {requested}")]
    EpochMismatch { requested: u64, beacon: u64 },
    #[error("total score is zero")]
    ZeroTotal,
    #[error("score {score} is outside [0, total={total}]")]
    ScoreOutOfRange { score: f64, total: f64 },
    #[error("{scores} scores but {keys} sortition keys")]
    LengthMismatch { scores: usize, keys: usize },
}

/// How several eligible validators in one epoch are resolved to a single
/// leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lowest `r_v / τ_v`: the eligible validator whose draw sits deepest
    /// inside its own threshold. Keeps the conditional leader distribution
    /// proportional to score.
    #[default]
    LowestRatio,
    /// Lowest raw `r_v`. Favors validators with small thresholds when several
    /// are eligible.
    LowestValue,
}

impl FromStr for TieBreak {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lowest_ratio" => Ok(Self::LowestRatio),
            "lowest_value" => Ok(Self::LowestValue),
            other => Err(format!("expected lowest_ratio|lowest_value, got `{other}`")),
        }
    }
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LowestRatio => "lowest_ratio",
            Self::LowestValue => "lowest_value",
        })
    }
}

/// Hash domain of a sortition draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortitionDomain {
    Leader,
    Committee,
}

impl SortitionDomain {
    fn tag(self) -> [u8; 32] {
        let mut tag = [0u8; 32];
        let name: &[u8] = match self {
            Self::Leader => b"pocmt/sortition/leader",
            Self::Committee => b"pocmt/sortition/committee",
        };
        tag[..name.len()].copy_from_slice(name);
        tag
    }
}

/// Per-validator sortition secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortitionKey {
    pub validator: ValidatorId,
    pub secret: [u8; 32],
}

impl SortitionKey {
    /// Key for `validator` derived from the run seed.
    pub fn derive(run_seed: u64, validator: ValidatorId) -> Self {
        let secret = keyed_hash(&[
            b"pocmt/sortition-key",
            &run_seed.to_le_bytes(),
            &validator.0.to_le_bytes(),
        ]);
        Self { validator, secret }
    }

    /// Hasher primed with the key block for `domain`. The secret and the
    /// domain tag fill exactly one SHA-256 block, so a draw costs a single
    /// further compression.
    pub fn prepare(&self, domain: SortitionDomain) -> Sha256 {
        let mut h = Sha256::new();
        h.update(self.secret);
        h.update(domain.tag());
        h
    }
}

/// Public randomness `rand(t)` for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochRandomness {
    pub epoch: u64,
    pub beacon: [u8; 32],
}

impl EpochRandomness {
    /// Seed-derived beacon: keyed hash of `(run_seed, domain_tag, epoch)`.
    pub fn derive(run_seed: u64, domain_tag: &str, epoch: u64) -> Self {
        let beacon = keyed_hash(&[
            b"pocmt/beacon",
            domain_tag.as_bytes(),
            &run_seed.to_le_bytes(),
            &epoch.to_le_bytes(),
        ]);
        Self { epoch, beacon }
    }
}

fn finish_draw(mut primed: Sha256, beacon: &EpochRandomness) -> f64 {
    primed.update(beacon.epoch.to_le_bytes());
    primed.update(beacon.beacon);
    unit_interval(&primed.finalize().into())
}

/// `r_v(t)` in `[0, 1)` for `domain`.
pub fn sortition_value_in(
    key: &SortitionKey,
    epoch: u64,
    beacon: &EpochRandomness,
    domain: SortitionDomain,
) -> Result<f64, ElectionError> {
    if beacon.epoch != epoch {
        return Err(ElectionError::EpochMismatch {
            requested: epoch,
            beacon: beacon.epoch,
        });
    }
    Ok(finish_draw(key.prepare(domain), beacon))
}

/// Leader-election draw `r_v(t)`.
pub fn sortition_value(
    key: &SortitionKey,
    epoch: u64,
    beacon: &EpochRandomness,
) -> Result<f64, ElectionError> {
    sortition_value_in(key, epoch, beacon, SortitionDomain::Leader)
}

/// Cached per-key hasher states for repeated draws across epochs.
#[derive(Clone)]
pub struct PreparedKey {
    leader: Sha256,
    committee: Sha256,
}

impl PreparedKey {
    pub fn new(key: &SortitionKey) -> Self {
        Self {
            leader: key.prepare(SortitionDomain::Leader),
            committee: key.prepare(SortitionDomain::Committee),
        }
    }

    /// Same value as [`sortition_value_in`] for the key this was built from.
    pub fn draw(&self, beacon: &EpochRandomness, domain: SortitionDomain) -> f64 {
        let primed = match domain {
            SortitionDomain::Leader => self.leader.clone(),
            SortitionDomain::Committee => self.committee.clone(),
        };
        finish_draw(primed, beacon)
    }
}

/// `τ_v = min(1, Θ·score/total)`.
pub fn leader_threshold(score: f64, total: f64, theta: f64) -> Result<f64, ElectionError> {
    if total <= 0.0 {
        return Err(ElectionError::ZeroTotal);
    }
    if !(0.0..=total * (1.0 + 1e-12)).contains(&score) {
        return Err(ElectionError::ScoreOutOfRange { score, total });
    }
    Ok((theta * score / total).min(1.0))
}

/// An eligible validator in one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eligible {
    /// Position in the score/key slices.
    pub index: usize,
    pub value: f64,
    pub threshold: f64,
}

impl Eligible {
    fn rank(&self, tie_break: TieBreak) -> f64 {
        match tie_break {
            TieBreak::LowestRatio => self.value / self.threshold,
            TieBreak::LowestValue => self.value,
        }
    }
}

/// Outcome of one epoch's leader election.
#[derive(Debug, Clone, PartialEq)]
pub struct Election {
    /// Position of the leader in the input slices, `None` for an empty epoch.
    pub leader: Option<usize>,
    /// Set when the total score was zero and the leader was drawn uniformly
    /// from the beacon.
    pub bootstrap: bool,
    /// Eligible validators ordered best-first under the tie-break.
    pub eligible: Vec<Eligible>,
}

/// Order eligible validators best-first: lowest rank, then lowest position.
pub fn rank_eligible(eligible: &mut [Eligible], tie_break: TieBreak) {
    eligible.sort_by(|a, b| {
        a.rank(tie_break)
            .total_cmp(&b.rank(tie_break))
            .then(a.index.cmp(&b.index))
    });
}

/// Elect from precomputed leader draws. `values[i]` is the draw of the
/// validator at position `i`; positions double as the id tie-break, so
/// callers keep them in ascending id order.
pub fn elect_from_values(
    scores: &[f64],
    values: &[f64],
    beacon: &EpochRandomness,
    theta: f64,
    tie_break: TieBreak,
) -> Election {
    debug_assert_eq!(scores.len(), values.len());
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        let leader = (!scores.is_empty()).then(|| {
            let digest = keyed_hash(&[b"pocmt/bootstrap", &beacon.epoch.to_le_bytes(), &beacon.beacon]);
            uniform_index(&digest, scores.len())
        });
        return Election {
            leader,
            bootstrap: true,
            eligible: Vec::new(),
        };
    }
    let mut eligible: Vec<Eligible> = scores
        .iter()
        .zip(values)
        .enumerate()
        .filter_map(|(index, (&score, &value))| {
            let threshold = (theta * score / total).min(1.0);
            (value < threshold).then_some(Eligible {
                index,
                value,
                threshold,
            })
        })
        .collect();
    rank_eligible(&mut eligible, tie_break);
    Election {
        leader: eligible.first().map(|e| e.index),
        bootstrap: false,
        eligible,
    }
}

/// Elect the leader of `beacon.epoch`. Returns the leader's id, or `None`
/// for an empty epoch.
pub fn elect_leader(
    scores: &[f64],
    keys: &[SortitionKey],
    beacon: &EpochRandomness,
    theta: f64,
    tie_break: TieBreak,
) -> Result<(Option<ValidatorId>, Election), ElectionError> {
    if scores.len() != keys.len() {
        return Err(ElectionError::LengthMismatch {
            scores: scores.len(),
            keys: keys.len(),
        });
    }
    let values = keys
        .iter()
        .map(|k| sortition_value(k, beacon.epoch, beacon))
        .collect::<Result<Vec<_>, _>>()?;
    let election = elect_from_values(scores, &values, beacon, theta, tie_break);
    Ok((election.leader.map(|i| keys[i].validator), election))
}

/// Committee membership from precomputed committee-domain draws.
pub fn committee_from_values(scores: &[f64], values: &[f64], committee_scale: f64) -> Vec<usize> {
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return (0..scores.len()).collect();
    }
    scores
        .iter()
        .zip(values)
        .enumerate()
        .filter(|(_, (&score, &value))| value < (committee_scale * score / total).min(1.0))
        .map(|(i, _)| i)
        .collect()
}

/// Sample a committee: each validator joins independently with probability
/// `min(1, c·CS_v/ΣCS)`. A zero total selects everyone.
pub fn sample_committee(
    scores: &[f64],
    keys: &[SortitionKey],
    beacon: &EpochRandomness,
    committee_scale: f64,
) -> Result<Vec<ValidatorId>, ElectionError> {
    if scores.len() != keys.len() {
        return Err(ElectionError::LengthMismatch {
            scores: scores.len(),
            keys: keys.len(),
        });
    }
    let values = keys
        .iter()
        .map(|k| sortition_value_in(k, beacon.epoch, beacon, SortitionDomain::Committee))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(committee_from_values(scores, &values, committee_scale)
        .into_iter()
        .map(|i| keys[i].validator)
        .collect())
}

/// Probability that no validator is eligible: `Π(1 − τ_v)`.
pub fn empty_epoch_probability(scores: &[f64], theta: f64) -> f64 {
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return if scores.is_empty() { 1.0 } else { 0.0 };
    }
    scores
        .iter()
        .map(|s| 1.0 - (theta * s / total).min(1.0))
        .product()
}

/// Exact per-validator probability of being elected leader in one epoch,
/// given the scores. Sums to `1 − P(empty)`.
///
/// With `r_v` uniform and independent:
///
/// - lowest ratio: `P_v = τ_v ∫₀¹ Π_{u≠v} (1 − τ_u·y) dy`, a polynomial
///   integrand evaluated by Gauss–Legendre quadrature of sufficient order to
///   be exact;
/// - lowest value: `P_v = ∫₀^{τ_v} Π_{u≠v} (1 − min(x, τ_u)) dx`, which is
///   `C·(1 − x)^n` between consecutive sorted thresholds and integrates in
///   closed form.
pub fn win_probabilities(scores: &[f64], theta: f64, tie_break: TieBreak) -> Vec<f64> {
    let n = scores.len();
    let total: f64 = scores.iter().sum();
    if n == 0 {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let taus: Vec<f64> = scores.iter().map(|s| (theta * s / total).min(1.0)).collect();
    match tie_break {
        TieBreak::LowestRatio => win_probabilities_ratio(&taus),
        TieBreak::LowestValue => win_probabilities_value(&taus),
    }
}

fn win_probabilities_ratio(taus: &[f64]) -> Vec<f64> {
    let n = taus.len();
    // integrand degree is n - 1; m nodes are exact up to degree 2m - 1
    let (nodes, weights) = gauss_legendre(n / 2 + 1);
    let mut probs = vec![0.0; n];
    let mut prefix = vec![1.0; n + 1];
    let mut suffix = vec![1.0; n + 1];
    for (&x, &w) in nodes.iter().zip(&weights) {
        // map [-1, 1] to [0, 1]
        let y = 0.5 * (x + 1.0);
        let w = 0.5 * w;
        for i in 0..n {
            prefix[i + 1] = prefix[i] * (1.0 - taus[i] * y);
        }
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * (1.0 - taus[i] * y);
        }
        for (v, p) in probs.iter_mut().enumerate() {
            *p += w * prefix[v] * suffix[v + 1];
        }
    }
    for (p, tau) in probs.iter_mut().zip(taus) {
        *p *= tau;
    }
    probs
}

fn win_probabilities_value(taus: &[f64]) -> Vec<f64> {
    let n = taus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
    // Walk the sorted thresholds. On [a, b] every validator with τ_u <= a
    // contributes the constant factor (1 − τ_u) and the `above` others
    // contribute (1 − x). A validator integrating over this segment is among
    // those above, so its own factor is excluded: exponent `above − 1`.
    let mut probs = vec![0.0; n];
    let mut cumulative = 0.0;
    let mut constant = 1.0;
    let mut lower = 0.0;
    let mut i = 0;
    while i < n {
        let upper = taus[order[i]];
        let above = n - i;
        if upper > lower {
            let m = above as i32;
            let seg = constant * ((1.0 - lower).powi(m) - (1.0 - upper).powi(m)) / f64::from(m);
            cumulative += seg;
        }
        // everyone whose threshold equals `upper` stops integrating here
        let mut j = i;
        while j < n && taus[order[j]] == upper {
            probs[order[j]] = cumulative;
            constant *= 1.0 - upper;
            j += 1;
        }
        lower = upper;
        i = j;
    }
    probs
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_m(z) and P_{m-1}(z)
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..m {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}
