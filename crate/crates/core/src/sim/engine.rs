use std::collections::HashMap;

use rand::Rng;

use super::trace::{BftReport, EpochRow, ExperimentTrace, ForkEvent, LeaderClass, WindowRow};
use super::{ExperimentConfig, SimError};
use crate::adversary::{fork_decision, CostLedger, ForkAction, ForkRace};
use crate::chain::{
    detect_equivocation, finalize, fork_choice, Block, BlockId, BlockStore, FinalityVote, GENESIS,
};
use crate::election::{elect_from_values, EpochRandomness, PreparedKey, SortitionDomain, SortitionKey};
use crate::hco::{honest_solves, WindowLedger};
use crate::rng::{stream, Stream};
use crate::state::{compute_score, epoch_update, slash, window_update, CommitmentState};
use crate::ValidatorId;

struct PrivateFork {
    base: BlockId,
    blocks: Vec<Block>,
    weight: f64,
}

#[derive(Default)]
struct Finality {
    voted_height: u64,
    finalized: HashMap<u64, Vec<BlockId>>,
    report: BftReport,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    honest: usize,
    states: Vec<CommitmentState>,
    scores: Vec<f64>,
    online: Vec<bool>,
    store: BlockStore,
    head: BlockId,
    evidence: u64,
    cost: CostLedger,
    fork: Option<PrivateFork>,
    finality: Option<Finality>,
    forks: Vec<ForkEvent>,
}

fn invariant(epoch: u64, what: impl std::fmt::Display) -> SimError {
    SimError::Invariant {
        epoch,
        what: what.to_string(),
    }
}

/// Execute one experiment. Identical configs yield identical traces.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentTrace, SimError> {
    cfg.validate()?;
    let honest = cfg.honest.count as usize;
    let sybils = cfg.adversary.identities as usize;
    let n = honest + sybils;
    let timeline = cfg.timeline;
    let horizon = timeline.horizon_epochs();
    let per_window = timeline.epochs_per_window();
    let tau_h = cfg.hco.tau_h;
    let capacity = cfg.adversary.capacity(tau_h);

    let keys: Vec<PreparedKey> = (0..n)
        .map(|i| PreparedKey::new(&SortitionKey::derive(cfg.seed, ValidatorId(i as u32))))
        .collect();
    let mut online_rng: Vec<Stream> = (0..honest)
        .map(|i| stream(cfg.seed, "honest-online", i as u64))
        .collect();
    let mut solve_rng: Vec<Stream> = (0..honest)
        .map(|i| stream(cfg.seed, "honest-solve", i as u64))
        .collect();
    let mut machine_rng: Vec<Stream> = (honest..n)
        .map(|i| stream(cfg.seed, "automated-solve", i as u64))
        .collect();

    let mut run = Run {
        cfg,
        honest,
        states: vec![CommitmentState::ZERO; n],
        scores: vec![0.0; n],
        online: vec![true; n],
        store: BlockStore::new(),
        head: GENESIS,
        evidence: 0,
        cost: CostLedger::new(),
        fork: None,
        finality: cfg.sim.bft.then(|| Finality {
            report: BftReport {
                precondition_held: true,
                ..Default::default()
            },
            ..Default::default()
        }),
        forks: Vec::new(),
    };

    let mut epochs = Vec::with_capacity(horizon as usize);
    let mut windows = Vec::with_capacity(timeline.window_count() as usize);
    let mut retained = cfg.sim.retain_scores.then(Vec::new);
    let mut leaders = Vec::with_capacity(horizon as usize);
    let mut adversary_online = vec![true; sybils];
    let mut allocation = vec![0u32; sybils];
    let mut values = vec![0.0; n];

    for t in 0..horizon {
        let window = t / per_window;
        let rate = cfg.hco.challenge_rate.rate(window);

        // (1) adversary step
        if t % per_window == 0 {
            adversary_online = cfg.adversary.online_set(window);
            allocation = cfg.adversary.allocation(tau_h, rate, window);
        }
        for (i, rng) in online_rng.iter_mut().enumerate() {
            run.online[i] = rng.random_bool(cfg.honest.online_prob);
        }
        run.online[honest..].copy_from_slice(&adversary_online);
        run.cost
            .record_online(adversary_online.iter().filter(|&&o| o).count() as u64);

        // (2) availability and participation
        if cfg.sim.epoch_dynamics {
            for (state, &online) in run.states.iter_mut().zip(&run.online) {
                *state = epoch_update(state, online, true, &cfg.protocol);
            }
        }

        // (3) scores
        let (w_honest, w_adversary) = run.recompute_scores(t)?;

        // (4) election
        let beacon = EpochRandomness::derive(cfg.seed, &cfg.election.beacon_domain_tag, t);
        for (v, key) in values.iter_mut().zip(&keys) {
            *v = key.draw(&beacon, SortitionDomain::Leader);
        }
        let election = elect_from_values(
            &run.scores,
            &values,
            &beacon,
            cfg.protocol.leader_scale,
            cfg.election.tie_break,
        );
        let leader = if election.bootstrap {
            election.leader
        } else {
            election
                .eligible
                .iter()
                .find(|e| run.online[e.index])
                .map(|e| e.index)
        };

        // (5) proposals and fork choice, (6) slashing
        let pre_head = run.head;
        let mut public = Vec::new();
        if let Some(l) = leader {
            let id = ValidatorId(l as u32);
            if l < honest || !cfg.adversary.private_fork {
                public.push(Block::new(pre_head, t, id, run.scores[l], values[l], 0));
                if l >= honest && cfg.adversary.equivocate {
                    public.push(Block::new(pre_head, t, id, run.scores[l], values[l], 1));
                }
            }
        }
        if cfg.adversary.private_fork {
            let pick = if election.bootstrap {
                leader.filter(|&l| l >= honest)
            } else {
                election
                    .eligible
                    .iter()
                    .filter(|e| e.index >= honest && run.online[e.index])
                    .max_by(|a, b| {
                        run.scores[a.index]
                            .total_cmp(&run.scores[b.index])
                            .then(b.index.cmp(&a.index))
                    })
                    .map(|e| e.index)
            };
            if let Some(a) = pick {
                let fork = run.fork.get_or_insert_with(|| PrivateFork {
                    base: pre_head,
                    blocks: Vec::new(),
                    weight: 0.0,
                });
                let parent = fork.blocks.last().map_or(fork.base, |b| b.id);
                let block = Block::new(parent, t, ValidatorId(a as u32), run.scores[a], values[a], 0);
                fork.weight += block.leader_score_snapshot;
                fork.blocks.push(block);
            }
        }
        for block in public {
            run.publish(t, block)?;
        }
        run.settle_fork(t, t + 1 == horizon)?;

        if run.finality.is_some() {
            run.vote(t, w_honest, w_adversary)?;
        }

        // (7) window boundary
        let boundary = timeline
            .is_window_boundary(t)
            .map_err(|e| invariant(t, e))?;
        if boundary {
            let mut ledger = WindowLedger::new(window, rate, capacity);
            let mut honest_total = 0u64;
            for (i, rng) in solve_rng.iter_mut().enumerate() {
                let x = honest_solves(rate, cfg.hco.honest_solve_prob, rng);
                honest_total += u64::from(x);
                ledger
                    .record_honest(ValidatorId(i as u32), x)
                    .map_err(|e| invariant(t, e))?;
            }
            for (j, rng) in machine_rng.iter_mut().enumerate() {
                let id = ValidatorId((honest + j) as u32);
                ledger
                    .record_adversary(id, allocation[j])
                    .map_err(|e| invariant(t, e))?;
                if cfg.hco.automated_solve_prob > 0.0 {
                    let extra = honest_solves(rate - allocation[j], cfg.hco.automated_solve_prob, rng);
                    ledger.record_automated(id, extra).map_err(|e| invariant(t, e))?;
                }
            }
            if ledger.adversary_spent() > capacity {
                return Err(invariant(t, "adversary human-time exceeds capacity"));
            }
            let mut short = 0u32;
            for (v, state) in run.states.iter_mut().enumerate() {
                let solved = ledger.total_solved(ValidatorId(v as u32));
                if v >= honest && solved < rate {
                    short += 1;
                }
                *state = window_update(state, solved, rate, &cfg.protocol).map_err(|e| invariant(t, e))?;
            }
            run.cost.record_window(ledger.adversary_spent());
            windows.push(WindowRow {
                window,
                adversary_spent: ledger.adversary_spent(),
                adversary_capacity: capacity,
                honest_solves_total: honest_total,
                automated_solves: ledger.automated_total(),
                adversary_short: short,
                issued_per_validator: rate,
            });
        }

        let total = w_honest + w_adversary;
        epochs.push(EpochRow {
            epoch: t,
            window,
            w_honest,
            w_adversary,
            leader: leader.map(|l| l as u32),
            leader_class: leader.map(|l| {
                if l < honest {
                    LeaderClass::Honest
                } else {
                    LeaderClass::Adversarial
                }
            }),
            bootstrap: election.bootstrap,
            honest_majority: w_adversary <= cfg.sim.rho * total,
            head_weight: run.store.weight(&run.head).map_err(|e| invariant(t, e))?,
            chain_len: run.store.height(&run.head).map_err(|e| invariant(t, e))?,
            evidence_count: run.evidence,
        });
        leaders.push(leader.map(|l| l as u32));
        if let Some(r) = retained.as_mut() {
            r.push(run.scores.clone());
        }
    }

    Ok(ExperimentTrace {
        timeline,
        honest_count: cfg.honest.count,
        adversary_count: cfg.adversary.identities,
        seed: cfg.seed,
        epochs,
        windows,
        forks: run.forks,
        bft: run.finality.map(|f| f.report),
        cost: run.cost,
        final_states: run.states,
        scores: retained,
        leaders,
    })
}

impl Run<'_> {
    fn recompute_scores(&mut self, t: u64) -> Result<(f64, f64), SimError> {
        let mut w_honest = 0.0;
        let mut w_adversary = 0.0;
        for (v, (state, score)) in self.states.iter().zip(self.scores.iter_mut()).enumerate() {
            if !state.is_non_negative() {
                return Err(invariant(t, format!("validator {v} has a negative component: {state:?}")));
            }
            *score = compute_score(state, &self.cfg.protocol);
            if v < self.honest {
                w_honest += *score;
            } else {
                w_adversary += *score;
            }
        }
        let total: f64 = self.scores.iter().sum();
        if (w_honest + w_adversary - total).abs() > 1e-9 * total.max(1.0) {
            return Err(invariant(t, "class weights do not sum to the total score"));
        }
        Ok((w_honest, w_adversary))
    }

    fn adopt(&mut self, candidate: BlockId, t: u64) -> Result<(), SimError> {
        self.head = fork_choice(&[self.head, candidate], &self.store).map_err(|e| invariant(t, e))?;
        Ok(())
    }

    fn publish(&mut self, t: u64, block: Block) -> Result<(), SimError> {
        if let Some(ev) = detect_equivocation(&block, &mut self.store) {
            let offender = ev.leader.index();
            self.states[offender] = slash(&self.states[offender], &self.cfg.protocol);
            self.evidence += 1;
            if offender >= self.honest {
                self.cost.record_slash();
            }
        }
        let id = block.id;
        self.store.insert(block).map_err(|e| invariant(t, e))?;
        self.adopt(id, t)
    }

    fn settle_fork(&mut self, t: u64, at_horizon: bool) -> Result<(), SimError> {
        let Some(fork) = &self.fork else {
            return Ok(());
        };
        let base_weight = self.store.weight(&fork.base).map_err(|e| invariant(t, e))?;
        let base_height = self.store.height(&fork.base).map_err(|e| invariant(t, e))?;
        let race = ForkRace {
            private_weight: fork.weight,
            public_weight: self.store.weight(&self.head).map_err(|e| invariant(t, e))? - base_weight,
            public_blocks: self.store.height(&self.head).map_err(|e| invariant(t, e))? - base_height,
        };
        if fork_decision(race, self.cfg.adversary.fork_patience, at_horizon) == ForkAction::Continue {
            return Ok(());
        }
        let fork = self.fork.take().expect("fork checked above");
        let old_head = self.head;
        let private_blocks = fork.blocks.len() as u64;
        for block in fork.blocks {
            self.publish(t, block)?;
        }
        let displaced = if self.head == old_head {
            0
        } else {
            let lca = self
                .store
                .common_ancestor(&old_head, &self.head)
                .map_err(|e| invariant(t, e))?;
            self.store.height(&old_head).map_err(|e| invariant(t, e))?
                - self.store.height(&lca).map_err(|e| invariant(t, e))?
        };
        self.forks.push(ForkEvent {
            epoch: t,
            private_blocks,
            displaced,
        });
        Ok(())
    }

    /// One voting round for every height the canonical chain has newly
    /// reached. Honest online validators vote once per height for the
    /// canonical block; adversarial identities vote for every block at it.
    fn vote(&mut self, t: u64, w_honest: f64, w_adversary: f64) -> Result<(), SimError> {
        let total = w_honest + w_adversary;
        let height = self.store.height(&self.head).map_err(|e| invariant(t, e))?;
        let finality = self.finality.as_mut().expect("finality enabled");
        while finality.voted_height < height {
            finality.voted_height += 1;
            let h = finality.voted_height;
            let report = &mut finality.report;
            report.voting_rounds += 1;
            if 3.0 * w_adversary >= total {
                report.precondition_held = false;
            }
            let canonical = self.store.ancestor_at(&self.head, h).map_err(|e| invariant(t, e))?;
            for block in self.store.blocks_at_height(h) {
                let votes: Vec<FinalityVote> = self
                    .scores
                    .iter()
                    .enumerate()
                    .filter(|&(v, _)| self.online[v] && (v >= self.honest || block == canonical))
                    .map(|(v, &weight)| FinalityVote {
                        voter: ValidatorId(v as u32),
                        block,
                        weight,
                    })
                    .collect();
                if finalize(&votes, total) {
                    report.finalized_blocks += 1;
                    let at = finality.finalized.entry(h).or_default();
                    at.push(block);
                    if at.len() == 2 {
                        report.conflicting_finalizations += 1;
                    }
                }
            }
        }
        Ok(())
    }
}
