//! Blocks, the public block store, weighted fork choice, equivocation
//! evidence and the weighted finality rule.
//!
//! A chain's weight is the sum of its leaders' scores frozen at proposal
//! time. Later score changes, including slashing, never alter historical
//! weights.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::rng::keyed_hash;
use crate::ValidatorId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("block {block} references unknown parent {parent}")]
    UnknownParent { block: BlockId, parent: BlockId },
    #[error("block {block} at epoch {epoch} does not follow its parent at epoch {parent_epoch}")]
    NonIncreasingEpoch {
        block: BlockId,
        epoch: u64,
        parent_epoch: u64,
    },
    #[error("block {block} does not link to the preceding block {expected}")]
    BrokenLink { block: BlockId, expected: BlockId },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("fork choice over an empty tip set")]
    NoTips,
}

/// Block digest. Ordered bytewise.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub [u8; 32]);

/// Parent marker of first blocks.
pub const GENESIS: BlockId = BlockId([0u8; 32]);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({self})")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub parent: BlockId,
    pub epoch: u64,
    pub leader: ValidatorId,
    /// Leader's commitment score at the proposal epoch.
    pub leader_score_snapshot: f64,
    pub sortition_value: f64,
    /// Stand-in for the transaction set; distinguishes equivocating siblings.
    pub payload_tag: u64,
}

impl Block {
    pub fn new(
        parent: BlockId,
        epoch: u64,
        leader: ValidatorId,
        leader_score_snapshot: f64,
        sortition_value: f64,
        payload_tag: u64,
    ) -> Self {
        let id = BlockId(keyed_hash(&[
            b"pocmt/block",
            &parent.0,
            &epoch.to_le_bytes(),
            &leader.0.to_le_bytes(),
            &payload_tag.to_le_bytes(),
        ]));
        Self {
            id,
            parent,
            epoch,
            leader,
            leader_score_snapshot,
            sortition_value,
            payload_tag,
        }
    }
}

/// Two distinct blocks by the same leader for the same epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivocationEvidence {
    pub leader: ValidatorId,
    pub epoch: u64,
    pub block_a: BlockId,
    pub block_b: BlockId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalityVote {
    pub voter: ValidatorId,
    pub block: BlockId,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct Entry {
    block: Block,
    height: u64,
    weight: f64,
}

/// Result of inserting a block into the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    New,
    Duplicate,
}

/// Published blocks with cached heights and cumulative weights.
#[derive(Debug, Clone, Default)]
pub struct BlockStore {
    entries: HashMap<BlockId, Entry>,
    tips: BTreeSet<BlockId>,
    by_slot: HashMap<(ValidatorId, u64), Vec<BlockId>>,
    by_height: HashMap<u64, Vec<BlockId>>,
    reported: HashSet<(ValidatorId, u64)>,
}

impl BlockStore {
    pub fn new() -> Self {
        let mut store = Self::default();
        store.tips.insert(GENESIS);
        store
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        *id == GENESIS || self.entries.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&Block> {
        self.entries.get(id).map(|e| &e.block)
    }

    /// Chain length from genesis, genesis itself at 0.
    pub fn height(&self, id: &BlockId) -> Result<u64, ChainError> {
        if *id == GENESIS {
            return Ok(0);
        }
        self.entries
            .get(id)
            .map(|e| e.height)
            .ok_or(ChainError::UnknownBlock(*id))
    }

    /// Root-to-block chain weight.
    pub fn weight(&self, id: &BlockId) -> Result<f64, ChainError> {
        if *id == GENESIS {
            return Ok(0.0);
        }
        self.entries
            .get(id)
            .map(|e| e.weight)
            .ok_or(ChainError::UnknownBlock(*id))
    }

    pub fn tips(&self) -> Vec<BlockId> {
        self.tips.iter().copied().collect()
    }

    /// Insert a block whose parent is already stored.
    pub fn insert(&mut self, block: Block) -> Result<Inserted, ChainError> {
        if self.entries.contains_key(&block.id) {
            return Ok(Inserted::Duplicate);
        }
        let (parent_height, parent_weight) = if block.parent == GENESIS {
            (0, 0.0)
        } else {
            let parent = self.entries.get(&block.parent).ok_or(ChainError::UnknownParent {
                block: block.id,
                parent: block.parent,
            })?;
            if parent.block.epoch >= block.epoch {
                return Err(ChainError::NonIncreasingEpoch {
                    block: block.id,
                    epoch: block.epoch,
                    parent_epoch: parent.block.epoch,
                });
            }
            (parent.height, parent.weight)
        };
        self.tips.remove(&block.parent);
        self.tips.insert(block.id);
        self.by_slot
            .entry((block.leader, block.epoch))
            .or_default()
            .push(block.id);
        self.by_height
            .entry(parent_height + 1)
            .or_default()
            .push(block.id);
        let entry = Entry {
            height: parent_height + 1,
            weight: parent_weight + block.leader_score_snapshot,
            block,
        };
        self.entries.insert(entry.block.id, entry);
        Ok(Inserted::New)
    }

    /// Block ids from genesis (exclusive) to `tip` (inclusive).
    pub fn path(&self, tip: &BlockId) -> Result<Vec<BlockId>, ChainError> {
        let mut out = Vec::new();
        let mut cur = *tip;
        while cur != GENESIS {
            let entry = self.entries.get(&cur).ok_or(ChainError::UnknownBlock(cur))?;
            out.push(cur);
            cur = entry.block.parent;
        }
        out.reverse();
        Ok(out)
    }

    /// Ancestor of `id` at `height` (0 is genesis).
    pub fn ancestor_at(&self, id: &BlockId, height: u64) -> Result<BlockId, ChainError> {
        let mut cur = *id;
        let mut h = self.height(&cur)?;
        if height > h {
            return Err(ChainError::UnknownBlock(*id));
        }
        while h > height {
            cur = self.entries[&cur].block.parent;
            h -= 1;
        }
        Ok(cur)
    }

    pub fn is_ancestor(&self, ancestor: &BlockId, of: &BlockId) -> Result<bool, ChainError> {
        let h = self.height(ancestor)?;
        if h > self.height(of)? {
            return Ok(false);
        }
        Ok(self.ancestor_at(of, h)? == *ancestor)
    }

    /// Lowest common ancestor of two stored blocks.
    pub fn common_ancestor(&self, a: &BlockId, b: &BlockId) -> Result<BlockId, ChainError> {
        let (ha, hb) = (self.height(a)?, self.height(b)?);
        let h = ha.min(hb);
        let mut x = self.ancestor_at(a, h)?;
        let mut y = self.ancestor_at(b, h)?;
        while x != y {
            x = self.entries[&x].block.parent;
            y = self.entries[&y].block.parent;
        }
        Ok(x)
    }

    /// Blocks at `height` (1-based) across all branches, in id order.
    pub fn blocks_at_height(&self, height: u64) -> Vec<BlockId> {
        let mut ids = self.by_height.get(&height).cloned().unwrap_or_default();
        ids.sort();
        ids
    }

    /// Current best tip under [`fork_choice`].
    pub fn head(&self) -> BlockId {
        // the tip set is never empty: it starts as {GENESIS}
        fork_choice(&self.tips(), self).expect("tip set is non-empty")
    }
}

/// Weight of a parent-linked chain starting at genesis: the sum of its
/// leaders' score snapshots.
pub fn chain_weight(chain: &[Block]) -> Result<f64, ChainError> {
    let mut expected = GENESIS;
    let mut last_epoch: Option<u64> = None;
    let mut weight = 0.0;
    for block in chain {
        if block.parent != expected {
            return Err(ChainError::BrokenLink {
                block: block.id,
                expected,
            });
        }
        if let Some(prev) = last_epoch {
            if prev >= block.epoch {
                return Err(ChainError::NonIncreasingEpoch {
                    block: block.id,
                    epoch: block.epoch,
                    parent_epoch: prev,
                });
            }
        }
        weight += block.leader_score_snapshot;
        expected = block.id;
        last_epoch = Some(block.epoch);
    }
    Ok(weight)
}

/// Pick the tip with maximal root-to-tip weight; ties go to the longer
/// chain, then to the lower block id.
pub fn fork_choice(tips: &[BlockId], store: &BlockStore) -> Result<BlockId, ChainError> {
    let mut best: Option<(f64, u64, BlockId)> = None;
    for tip in tips {
        let w = store.weight(tip)?;
        let h = store.height(tip)?;
        let better = match best {
            None => true,
            Some((bw, bh, bid)) => w > bw || (w == bw && (h > bh || (h == bh && *tip < bid))),
        };
        if better {
            best = Some((w, h, *tip));
        }
    }
    best.map(|(_, _, id)| id).ok_or(ChainError::NoTips)
}

/// Check `block` against the store before it is inserted. Evidence is
/// returned when another block for the same `(leader, epoch)` is already
/// stored, at most once per offense.
pub fn detect_equivocation(block: &Block, store: &mut BlockStore) -> Option<EquivocationEvidence> {
    let slot = (block.leader, block.epoch);
    let other = store
        .by_slot
        .get(&slot)?
        .iter()
        .copied()
        .find(|id| *id != block.id)?;
    if !store.reported.insert(slot) {
        return None;
    }
    Some(EquivocationEvidence {
        leader: block.leader,
        epoch: block.epoch,
        block_a: other,
        block_b: block.id,
    })
}

/// Whether the votes carry strictly more than two thirds of `total_weight`.
/// Each voter counts once.
pub fn finalize(votes: &[FinalityVote], total_weight: f64) -> bool {
    let mut seen = HashSet::new();
    let sum: f64 = votes
        .iter()
        .filter(|v| seen.insert(v.voter))
        .map(|v| v.weight)
        .sum();
    exceeds_two_thirds(sum, total_weight)
}

/// `sum > (2/3)·total`, evaluated without division so integer-valued weights
/// compare exactly.
pub fn exceeds_two_thirds(sum: f64, total: f64) -> bool {
    total > 0.0 && 3.0 * sum > 2.0 * total
}

/// Integer-weight variant of the quorum rule.
pub fn exceeds_two_thirds_exact(sum: u64, total: u64) -> bool {
    total > 0 && 3 * u128::from(sum) > 2 * u128::from(total)
}

/// Counts from [`exhaustive_double_voting`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DoubleVotingReport {
    /// `(weights, adversarial set)` combinations with adversarial weight
    /// below a third.
    pub instances: u64,
    /// Honest voting patterns checked across all instances.
    pub patterns: u64,
    /// Patterns in which two conflicting blocks both finalized.
    pub conflicts: u64,
}

/// Enumerate every validator set of size `1..=max_validators` with integer
/// weights in `1..=max_weight`, every adversarial subset holding less than a
/// third of the weight, and every honest assignment of {abstain, block A,
/// block B}. Adversarial validators vote for both blocks.
pub fn exhaustive_double_voting(max_validators: usize, max_weight: u64) -> DoubleVotingReport {
    let mut report = DoubleVotingReport::default();
    for n in 1..=max_validators {
        let mut weights = vec![1u64; n];
        loop {
            let total: u64 = weights.iter().sum();
            for adversary in 0..1usize << n {
                let w_adv: u64 = (0..n).filter(|i| adversary >> i & 1 == 1).map(|i| weights[i]).sum();
                if 3 * w_adv >= total {
                    continue;
                }
                report.instances += 1;
                let honest: Vec<usize> = (0..n).filter(|i| adversary >> i & 1 == 0).collect();
                let patterns = 3usize.pow(honest.len() as u32);
                for mut code in 0..patterns {
                    let (mut a, mut b) = (w_adv, w_adv);
                    for &i in &honest {
                        match code % 3 {
                            1 => a += weights[i],
                            2 => b += weights[i],
                            _ => {}
                        }
                        code /= 3;
                    }
                    report.patterns += 1;
                    if exceeds_two_thirds_exact(a, total) && exceeds_two_thirds_exact(b, total) {
                        report.conflicts += 1;
                    }
                }
            }
            let mut i = 0;
            while i < n && weights[i] == max_weight {
                weights[i] = 1;
                i += 1;
            }
            if i == n {
                break;
            }
            weights[i] += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u32) -> ValidatorId {
        ValidatorId(i)
    }

    fn build(store: &mut BlockStore, parent: BlockId, specs: &[(u64, u32, f64)]) -> Vec<Block> {
        let mut out = Vec::new();
        let mut parent = parent;
        for &(epoch, leader, w) in specs {
            let b = Block::new(parent, epoch, v(leader), w, 0.0, 0);
            store.insert(b.clone()).unwrap();
            parent = b.id;
            out.push(b);
        }
        out
    }

    #[test]
    fn chain_weight_examples() {
        assert_eq!(chain_weight(&[]), Ok(0.0));
        let mut store = BlockStore::new();
        let chain = build(&mut store, GENESIS, &[(0, 1, 4.1), (1, 2, 3.0)]);
        assert!((chain_weight(&chain).unwrap() - 7.1).abs() < 1e-12);
        assert!(chain_weight(&chain).unwrap() >= chain_weight(&chain[..1]).unwrap());
        let broken = vec![chain[1].clone()];
        assert!(matches!(chain_weight(&broken), Err(ChainError::BrokenLink { .. })));
    }

    #[test]
    fn fork_choice_examples() {
        let mut store = BlockStore::new();
        let a = build(&mut store, GENESIS, &[(0, 1, 4.1), (1, 2, 3.0)]);
        assert_eq!(fork_choice(&[a[1].id], &store), Ok(a[1].id));
        let b = build(&mut store, GENESIS, &[(2, 3, 5.0)]);
        assert_eq!(fork_choice(&[a[1].id, b[0].id], &store), Ok(a[1].id));
        assert_eq!(store.head(), a[1].id);
        assert_eq!(fork_choice(&[], &store), Err(ChainError::NoTips));
    }

    #[test]
    fn fork_choice_ties_prefer_length_then_lower_id() {
        let mut store = BlockStore::new();
        let long = build(&mut store, GENESIS, &[(0, 1, 1.0), (1, 1, 1.0), (2, 1, 1.0)]);
        let short = build(&mut store, GENESIS, &[(0, 2, 1.5), (1, 2, 1.5)]);
        assert_eq!(fork_choice(&[short[1].id, long[2].id], &store), Ok(long[2].id));

        let x = build(&mut store, GENESIS, &[(5, 7, 9.0)]);
        let y = build(&mut store, GENESIS, &[(5, 8, 9.0)]);
        let lower = x[0].id.min(y[0].id);
        assert_eq!(fork_choice(&[x[0].id, y[0].id], &store), Ok(lower));
    }

    #[test]
    fn insert_rejects_bad_links() {
        let mut store = BlockStore::new();
        let a = build(&mut store, GENESIS, &[(3, 1, 1.0)]);
        let orphan = Block::new(BlockId([9; 32]), 4, v(1), 1.0, 0.0, 0);
        assert!(matches!(store.insert(orphan), Err(ChainError::UnknownParent { .. })));
        let stale = Block::new(a[0].id, 3, v(2), 1.0, 0.0, 0);
        assert!(matches!(store.insert(stale), Err(ChainError::NonIncreasingEpoch { .. })));
        assert_eq!(store.insert(a[0].clone()), Ok(Inserted::Duplicate));
    }

    #[test]
    fn equivocation_examples() {
        let mut store = BlockStore::new();
        let first = Block::new(GENESIS, 4, v(3), 1.0, 0.1, 0);
        assert_eq!(detect_equivocation(&first, &mut store), None);
        store.insert(first.clone()).unwrap();
        assert_eq!(detect_equivocation(&first, &mut store), None);
        let second = Block::new(GENESIS, 4, v(3), 1.0, 0.1, 1);
        let ev = detect_equivocation(&second, &mut store).unwrap();
        assert_eq!(
            ev,
            EquivocationEvidence {
                leader: v(3),
                epoch: 4,
                block_a: first.id,
                block_b: second.id
            }
        );
        store.insert(second).unwrap();
        let third = Block::new(GENESIS, 4, v(3), 1.0, 0.1, 2);
        assert_eq!(detect_equivocation(&third, &mut store), None);
        // a different leader in the same epoch is not an offense
        let other = Block::new(GENESIS, 4, v(4), 1.0, 0.1, 0);
        assert_eq!(detect_equivocation(&other, &mut store), None);
    }

    #[test]
    fn finalize_examples() {
        let votes = |ws: &[f64]| -> Vec<FinalityVote> {
            ws.iter()
                .enumerate()
                .map(|(i, &weight)| FinalityVote {
                    voter: v(i as u32),
                    block: GENESIS,
                    weight,
                })
                .collect()
        };
        assert!(!finalize(&votes(&[2.0]), 3.0));
        assert!(finalize(&votes(&[0.4, 0.3]), 1.0));
        assert!(!finalize(&[], 1.0));
        // duplicate voter counted once
        let mut dup = votes(&[0.5]);
        dup.push(dup[0].clone());
        assert!(!finalize(&dup, 1.0));
        assert!(!exceeds_two_thirds_exact(2, 3));
        assert!(exceeds_two_thirds_exact(7, 10));
    }

    #[test]
    fn ancestry_queries() {
        let mut store = BlockStore::new();
        let a = build(&mut store, GENESIS, &[(0, 1, 1.0), (1, 1, 1.0), (2, 1, 1.0)]);
        let b = build(&mut store, a[0].id, &[(5, 2, 1.0)]);
        assert_eq!(store.common_ancestor(&a[2].id, &b[0].id), Ok(a[0].id));
        assert!(store.is_ancestor(&a[0].id, &b[0].id).unwrap());
        assert!(!store.is_ancestor(&a[1].id, &b[0].id).unwrap());
        assert_eq!(store.path(&a[2].id).unwrap(), vec![a[0].id, a[1].id, a[2].id]);
        assert_eq!(store.blocks_at_height(2).len(), 2);
        assert_eq!(store.tips().len(), 2);
    }

    #[test]
    fn double_voting_small_grid() {
        let r = exhaustive_double_voting(3, 2);
        assert!(r.instances > 0 && r.patterns > r.instances);
        assert_eq!(r.conflicts, 0);
    }

    /// Any two vote sets above two thirds of the total weight share voters
    /// holding more than a third of it.
    #[test]
    fn quorum_intersection_exhaustive() {
        for n in 1..=5usize {
            let mut weights = vec![1u64; n];
            loop {
                let total: u64 = weights.iter().sum();
                let w = |mask: usize| -> u64 { (0..n).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum() };
                let quorums: Vec<usize> = (0..1usize << n).filter(|&m| exceeds_two_thirds_exact(w(m), total)).collect();
                for &q1 in &quorums {
                    for &q2 in &quorums {
                        assert!(3 * w(q1 & q2) > total, "weights {weights:?} q1 {q1:b} q2 {q2:b}");
                    }
                }
                // next weight vector in {1..=4}^n
                let mut i = 0;
                while i < n && weights[i] == 4 {
                    weights[i] = 1;
                    i += 1;
                }
                if i == n {
                    break;
                }
                weights[i] += 1;
            }
        }
    }
}
