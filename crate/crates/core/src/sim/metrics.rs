//! Trace metrics.

use super::trace::{ExperimentTrace, ForkEvent, LeaderClass};
use crate::election::{win_probabilities, TieBreak};

/// Outcome of [`check_drift`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftCheck {
    pub holds: bool,
    /// First window whose boundary gap fell below the previous one.
    pub first_violation: Option<u64>,
}

/// Whether `W_H − W_A`, sampled at each window boundary, never decreases.
pub fn check_drift(trace: &ExperimentTrace) -> DriftCheck {
    let samples: Vec<(u64, f64)> = trace
        .epochs
        .iter()
        .filter(|r| trace.timeline.is_window_boundary(r.epoch).unwrap_or(false))
        .map(|r| (r.window, r.w_honest - r.w_adversary))
        .collect();
    drift_in(&samples)
}

/// Drift check over `(window, gap)` samples in window order.
pub fn drift_in(samples: &[(u64, f64)]) -> DriftCheck {
    let first_violation = samples.windows(2).find_map(|pair| {
        let (_, prev) = pair[0];
        let (window, gap) = pair[1];
        (gap < prev - 1e-9 * prev.abs().max(1.0)).then_some(window)
    });
    DriftCheck {
        holds: first_violation.is_none(),
        first_violation,
    }
}

/// Fraction of non-empty epochs led by `class`; `None` if every epoch was
/// empty.
pub fn leader_share(trace: &ExperimentTrace, class: LeaderClass) -> Option<f64> {
    let led: Vec<LeaderClass> = trace.epochs.iter().filter_map(|r| r.leader_class).collect();
    if led.is_empty() {
        return None;
    }
    Some(led.iter().filter(|&&c| c == class).count() as f64 / led.len() as f64)
}

/// `W_A / W_tot` at the last epoch.
pub fn final_weight_share(trace: &ExperimentTrace) -> Option<f64> {
    let last = trace.epochs.last()?;
    let total = last.total_weight();
    (total > 0.0).then(|| last.w_adversary / total)
}

/// Mean of `W_A / W_tot` over epochs with positive total weight.
pub fn mean_weight_share(trace: &ExperimentTrace) -> Option<f64> {
    let shares: Vec<f64> = trace
        .epochs
        .iter()
        .filter(|r| r.total_weight() > 0.0)
        .map(|r| r.w_adversary / r.total_weight())
        .collect();
    (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64)
}

/// Fraction of epochs without a leader.
pub fn empty_rate(trace: &ExperimentTrace) -> f64 {
    if trace.epochs.is_empty() {
        return 0.0;
    }
    trace.epochs.iter().filter(|r| r.empty_epoch()).count() as f64 / trace.epochs.len() as f64
}

/// Canonical chain length at the horizon.
pub fn final_chain_len(trace: &ExperimentTrace) -> u64 {
    trace.epochs.last().map_or(0, |r| r.chain_len)
}

/// `min p_H(t)` over epochs past the warm-up fraction.
pub fn p_min(trace: &ExperimentTrace, warmup: f64) -> Option<f64> {
    let skip = (warmup * trace.epochs.len() as f64).ceil() as usize;
    trace
        .epochs
        .iter()
        .skip(skip)
        .filter(|r| r.total_weight() > 0.0)
        .map(|r| r.w_honest / r.total_weight())
        .min_by(f64::total_cmp)
}

/// Mean number of epochs between consecutive honest-led epochs.
pub fn honest_leader_delay(trace: &ExperimentTrace) -> Option<f64> {
    let led: Vec<u64> = trace
        .epochs
        .iter()
        .filter(|r| r.leader_class == Some(LeaderClass::Honest))
        .map(|r| r.epoch)
        .collect();
    if led.len() < 2 {
        return None;
    }
    Some((led[led.len() - 1] - led[0]) as f64 / (led.len() - 1) as f64)
}

/// Leader counts and summed exact win probabilities of the honest
/// validators. Tallies from several runs can be merged before comparing.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessTally {
    pub epochs: u64,
    pub led: Vec<u64>,
    pub expected: Vec<f64>,
}

impl FairnessTally {
    pub fn merge(&mut self, other: &FairnessTally) {
        self.epochs += other.epochs;
        for (a, b) in self.led.iter_mut().zip(&other.led) {
            *a += b;
        }
        for (a, b) in self.expected.iter_mut().zip(&other.expected) {
            *a += b;
        }
    }

    /// `|empirical leader frequency − mean win probability|` per validator.
    pub fn deviations(&self) -> Vec<f64> {
        let n = self.epochs.max(1) as f64;
        self.led
            .iter()
            .zip(&self.expected)
            .map(|(&led, &exp)| (led as f64 / n - exp / n).abs())
            .collect()
    }
}

/// Tally for the honest validators of a trace with retained scores.
pub fn fairness_tally(trace: &ExperimentTrace, theta: f64, tie_break: TieBreak) -> Option<FairnessTally> {
    let scores = trace.scores.as_ref()?;
    let h = trace.honest_count as usize;
    let mut tally = FairnessTally {
        epochs: scores.len() as u64,
        led: vec![0; h],
        expected: vec![0.0; h],
    };
    for (epoch_scores, leader) in scores.iter().zip(&trace.leaders) {
        let probs = win_probabilities(epoch_scores, theta, tie_break);
        for (e, p) in tally.expected.iter_mut().zip(&probs) {
            *e += p;
        }
        if let Some(l) = leader {
            if let Some(c) = tally.led.get_mut(*l as usize) {
                *c += 1;
            }
        }
    }
    Some(tally)
}

/// Per-honest-validator fairness deviation of one trace.
pub fn fairness_deviation(trace: &ExperimentTrace, theta: f64, tie_break: TieBreak) -> Option<Vec<f64>> {
    fairness_tally(trace, theta, tie_break).map(|t| t.deviations())
}

/// Fraction of fork releases displacing at least `k` public blocks, for
/// `k = 0..=k_max`. All zeros when nothing was released.
pub fn reorg_profile(trace: &ExperimentTrace, k_max: u64) -> Vec<f64> {
    reorg_profile_of(&trace.forks, k_max)
}

pub fn reorg_profile_of(events: &[ForkEvent], k_max: u64) -> Vec<f64> {
    let counts = reorg_counts(events, k_max);
    let n = events.len();
    counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect()
}

/// Number of releases displacing at least `k` blocks, `k = 0..=k_max`.
pub fn reorg_counts(events: &[ForkEvent], k_max: u64) -> Vec<u64> {
    (0..=k_max)
        .map(|k| events.iter().filter(|e| e.displaced >= k).count() as u64)
        .collect()
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either series is constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
