//! Experiment presets, run plans and CSV reports.
//!
//! A [`Plan`] is a list of parameter points times a list of seeds. Each
//! `(point, seed)` pair is one simulation. Output files:
//!
//! - `trace_<preset>_<params>_<seed>.csv`: one row per epoch.
//! - `windows_<preset>_<params>_<seed>.csv`: one row per human window.
//! - `runs_<preset>.csv`: one summary row per run.
//! - `summary_<preset>.csv`: one row per parameter point, aggregated over
//!   seeds.
//! - `reorg_<preset>.csv`: pooled fork-release displacement profile, when
//!   any fork was released.
//! - `fairness_<preset>.csv`: pooled honest leader frequencies, when scores
//!   were retained.
//! - `bft_<preset>.csv`: finality outcomes, when finality voting ran or the
//!   preset is `bft-safety`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::adversary::OnlinePolicy;
use crate::chain::exhaustive_double_voting;
use crate::config::{self, ConfigError};
use crate::par;
use crate::sim::metrics::{
    check_drift, empty_rate, fairness_tally, final_chain_len, final_weight_share, honest_leader_delay,
    leader_share, mean_std, mean_weight_share, p_min, reorg_counts, DriftCheck, FairnessTally,
};
use crate::sim::{self, BftReport, ExperimentConfig, ExperimentTrace, ForkEvent, LeaderClass, SimError};

/// Largest displacement depth reported in `reorg_<preset>.csv`.
pub const REORG_MAX_DEPTH: u64 = 10;

#[derive(Debug, Error)]
pub enum PresetError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {label} seed {seed}: {source}")]
    Sim {
        label: String,
        seed: u64,
        source: SimError,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> PresetError {
    PresetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub const PRESETS: &[&str] = &[
    "drift",
    "capacity-sweep",
    "fairness",
    "decay-ablation",
    "common-prefix",
    "bft-safety",
];

/// One parameter point of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    /// File-name fragment, e.g. `m10`.
    pub label: String,
    /// Swept value, if the plan sweeps a key.
    pub value: Option<String>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub name: String,
    pub sweep_key: Option<String>,
    pub points: Vec<Point>,
    pub seeds: Vec<u64>,
}

struct Sweep {
    key: &'static str,
    short: &'static str,
    values: Vec<String>,
}

fn preset_base(name: &str) -> Result<(ExperimentConfig, Option<Sweep>, u64), ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let plan = match name {
        "drift" => (cfg, None, 10),
        "capacity-sweep" => {
            let values = (0..=50).step_by(5).map(|m: u32| m.to_string()).collect();
            let sweep = Sweep {
                key: "adversary.humans",
                short: "m",
                values,
            };
            (cfg, Some(sweep), 20)
        }
        "fairness" => {
            cfg.adversary.identities = 0;
            cfg.adversary.humans = 0;
            cfg.sim.retain_scores = true;
            (cfg, None, 20)
        }
        "decay-ablation" => {
            cfg.adversary.online_policy = OnlinePolicy::Rotate(0.5);
            cfg.protocol.availability_cap = Some(10.0);
            let sweep = Sweep {
                key: "protocol.decay_rate",
                short: "lambda",
                values: vec!["0.01".into(), "0.05".into(), "0.2".into()],
            };
            (cfg, Some(sweep), 10)
        }
        "common-prefix" => {
            cfg.adversary.humans = 0;
            cfg.adversary.private_fork = true;
            (cfg, None, 200)
        }
        "bft-safety" => {
            cfg.adversary.identities = 20;
            cfg.adversary.humans = 5;
            cfg.adversary.equivocate = true;
            cfg.sim.bft = true;
            (cfg, None, 50)
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    Ok(plan)
}

fn build(
    name: &str,
    base: ExperimentConfig,
    sweep: Option<Sweep>,
    seeds: Vec<u64>,
    overrides: &[(String, String)],
) -> Result<Plan, ConfigError> {
    let finish = |mut cfg: ExperimentConfig| -> Result<ExperimentConfig, ConfigError> {
        for (k, v) in overrides {
            config::set(&mut cfg, k, v)?;
        }
        config::validate(&cfg)?;
        Ok(cfg)
    };
    let (sweep_key, points) = match sweep {
        None => (
            None,
            vec![Point {
                label: "base".into(),
                value: None,
                config: finish(base)?,
            }],
        ),
        Some(sweep) => {
            let mut points = Vec::new();
            for v in &sweep.values {
                let mut cfg = base.clone();
                config::set(&mut cfg, sweep.key, v)?;
                points.push(Point {
                    label: format!("{}{}", sweep.short, v),
                    value: Some(v.clone()),
                    config: finish(cfg)?,
                });
            }
            (Some(sweep.key.to_string()), points)
        }
    };
    Ok(Plan {
        name: name.to_string(),
        sweep_key,
        points,
        seeds,
    })
}

/// Plan for a named preset with `key=value` overrides applied last.
pub fn plan_preset(name: &str, overrides: &[(String, String)]) -> Result<Plan, ConfigError> {
    let (base, sweep, seeds) = preset_base(name)?;
    build(name, base, sweep, (0..seeds).collect(), overrides)
}

/// Single-point plan from config text. The config's own `sim.seed` is the
/// only seed unless replaced.
pub fn plan_config(name: &str, text: &str, overrides: &[(String, String)]) -> Result<Plan, ConfigError> {
    let mut base = ExperimentConfig::default();
    config::apply_text(&mut base, text)?;
    let seed = base.seed;
    build(name, base, None, vec![seed], overrides)
}

/// Plan from a preset name or a config file path.
pub fn load_config(source: &str, overrides: &[(String, String)]) -> Result<Plan, ConfigError> {
    if PRESETS.contains(&source) {
        return plan_preset(source, overrides);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(ConfigError::UnknownPreset(source.to_string()));
    }
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{source}: {e}")))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("config")
        .to_string();
    plan_config(&name, &text, overrides)
}

impl Plan {
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    /// Every `(point index, seed)` pair, point-major.
    pub fn runs(&self) -> Vec<(usize, u64)> {
        (0..self.points.len())
            .flat_map(|p| self.seeds.iter().map(move |&s| (p, s)))
            .collect()
    }

    pub fn config_for(&self, point: usize, seed: u64) -> ExperimentConfig {
        let mut cfg = self.points[point].config.clone();
        cfg.seed = seed;
        cfg
    }
}

/// Per-run scalar metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub leader_share: Option<f64>,
    pub final_weight_share: Option<f64>,
    pub mean_weight_share: Option<f64>,
    pub empty_rate: f64,
    pub chain_len: u64,
    pub horizon: u64,
    pub drift: DriftCheck,
    pub human_time: u64,
    pub windows: u64,
    pub p_min: Option<f64>,
    pub honest_delay: Option<f64>,
    pub evidence: u64,
    pub majority_violations: u64,
}

impl RunSummary {
    pub fn of(trace: &ExperimentTrace, warmup: f64) -> Self {
        Self {
            leader_share: leader_share(trace, LeaderClass::Adversarial),
            final_weight_share: final_weight_share(trace),
            mean_weight_share: mean_weight_share(trace),
            empty_rate: empty_rate(trace),
            chain_len: final_chain_len(trace),
            horizon: trace.timeline.horizon_epochs(),
            drift: check_drift(trace),
            human_time: trace.cost.human_time_spent,
            windows: trace.windows.len() as u64,
            p_min: p_min(trace, warmup),
            honest_delay: honest_leader_delay(trace),
            evidence: trace.epochs.last().map_or(0, |r| r.evidence_count),
            majority_violations: trace.epochs.iter().filter(|r| !r.honest_majority).count() as u64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub point: usize,
    pub seed: u64,
    pub summary: RunSummary,
    pub fairness: Option<FairnessTally>,
    pub forks: Vec<ForkEvent>,
    pub bft: Option<BftReport>,
    pub trace: Option<ExperimentTrace>,
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), PresetError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

/// Run every `(point, seed)` of `plan`. With `out`, per-run trace and window
/// CSVs are written there. Traces are kept in the outcomes only when
/// `keep_traces` is set.
pub fn execute(plan: &Plan, jobs: usize, out: Option<&Path>, keep_traces: bool) -> Result<Vec<RunOutcome>, PresetError> {
    let runs = plan.runs();
    let results = par::map(&runs, jobs, |&(point, seed)| -> Result<RunOutcome, PresetError> {
        let cfg = plan.config_for(point, seed);
        let label = &plan.points[point].label;
        let trace = sim::run(&cfg).map_err(|source| PresetError::Sim {
            label: label.clone(),
            seed,
            source,
        })?;
        if let Some(dir) = out {
            let stem = format!("{}_{}_{}", plan.name, label, seed);
            write_file(&dir.join(format!("trace_{stem}.csv")), |w| trace.write_epochs_csv(w))?;
            write_file(&dir.join(format!("windows_{stem}.csv")), |w| trace.write_windows_csv(w))?;
        }
        Ok(RunOutcome {
            point,
            seed,
            summary: RunSummary::of(&trace, cfg.sim.warmup),
            fairness: fairness_tally(&trace, cfg.protocol.leader_scale, cfg.election.tie_break),
            forks: trace.forks.clone(),
            bft: trace.bft.clone(),
            trace: keep_traces.then_some(trace),
        })
    });
    results.into_iter().collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Aggregates of one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub label: String,
    pub value: Option<String>,
    pub runs: usize,
    pub leader_share: (f64, f64),
    pub final_weight_share: (f64, f64),
    pub mean_weight_share: f64,
    pub empty_rate: f64,
    pub chain_len_ratio: f64,
    pub drift_holds: bool,
    pub human_time: f64,
    pub evidence: f64,
}

pub fn summarize(plan: &Plan, outcomes: &[RunOutcome]) -> Vec<PointSummary> {
    plan.points
        .iter()
        .enumerate()
        .map(|(p, point)| {
            let rows: Vec<&RunSummary> = outcomes.iter().filter(|o| o.point == p).map(|o| &o.summary).collect();
            let col = |f: &dyn Fn(&RunSummary) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(|r| f(r)).collect() };
            let mean = |xs: Vec<f64>| mean_std(&xs).0;
            PointSummary {
                label: point.label.clone(),
                value: point.value.clone(),
                runs: rows.len(),
                leader_share: mean_std(&col(&|r| r.leader_share)),
                final_weight_share: mean_std(&col(&|r| r.final_weight_share)),
                mean_weight_share: mean(col(&|r| r.mean_weight_share)),
                empty_rate: mean(col(&|r| Some(r.empty_rate))),
                chain_len_ratio: mean(col(&|r| Some(r.chain_len as f64 / r.horizon.max(1) as f64))),
                drift_holds: rows.iter().all(|r| r.drift.holds),
                human_time: mean(col(&|r| Some(r.human_time as f64))),
                evidence: mean(col(&|r| Some(r.evidence as f64))),
            }
        })
        .collect()
}

/// Pooled fork releases per point.
pub fn pooled_forks(plan: &Plan, outcomes: &[RunOutcome]) -> Vec<Vec<ForkEvent>> {
    (0..plan.points.len())
        .map(|p| {
            outcomes
                .iter()
                .filter(|o| o.point == p)
                .flat_map(|o| o.forks.iter().copied())
                .collect()
        })
        .collect()
}

/// Pooled fairness tally per point, if scores were retained.
pub fn pooled_fairness(plan: &Plan, outcomes: &[RunOutcome]) -> Vec<Option<FairnessTally>> {
    (0..plan.points.len())
        .map(|p| {
            let mut tallies = outcomes.iter().filter(|o| o.point == p).filter_map(|o| o.fairness.as_ref());
            let mut pooled = tallies.next()?.clone();
            for t in tallies {
                pooled.merge(t);
            }
            Some(pooled)
        })
        .collect()
}

pub const RUNS_CSV_HEADER: &str = "params,seed,leader_share,final_weight_share,mean_weight_share,empty_rate,chain_len,drift_holds,first_violation,human_time,p_min,honest_delay,evidence_count,majority_violations,fork_releases";
pub const SUMMARY_CSV_HEADER: &str = "params,value,runs,leader_share_mean,leader_share_std,weight_share_mean,weight_share_std,mean_weight_share,empty_rate,chain_len_ratio,drift_holds_all,human_time_mean,evidence_mean";
pub const REORG_CSV_HEADER: &str = "params,depth,releases,displacing,frequency";
pub const FAIRNESS_CSV_HEADER: &str = "params,validator,epochs,led,expected,deviation";
pub const BFT_CSV_HEADER: &str = "source,params,seed,instances,voting_rounds,finalized,conflicting,precondition_held";

/// Write the aggregate CSVs of `plan` into `dir`.
pub fn write_reports(plan: &Plan, outcomes: &[RunOutcome], dir: &Path) -> Result<Vec<PathBuf>, PresetError> {
    let mut written = Vec::new();
    let name = &plan.name;

    let mut runs = String::new();
    let _ = writeln!(runs, "{RUNS_CSV_HEADER}");
    for o in outcomes {
        let r = &o.summary;
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            plan.points[o.point].label,
            o.seed,
            opt(r.leader_share),
            opt(r.final_weight_share),
            opt(r.mean_weight_share),
            r.empty_rate,
            r.chain_len,
            r.drift.holds,
            r.drift.first_violation.map(|w| w.to_string()).unwrap_or_default(),
            r.human_time,
            opt(r.p_min),
            opt(r.honest_delay),
            r.evidence,
            r.majority_violations,
            o.forks.len()
        );
    }
    let path = dir.join(format!("runs_{name}.csv"));
    write_file(&path, |w| w.write_all(runs.as_bytes()))?;
    written.push(path);

    let mut summary = String::new();
    let _ = writeln!(summary, "{SUMMARY_CSV_HEADER}");
    for s in summarize(plan, outcomes) {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.label,
            s.value.clone().unwrap_or_default(),
            s.runs,
            s.leader_share.0,
            s.leader_share.1,
            s.final_weight_share.0,
            s.final_weight_share.1,
            s.mean_weight_share,
            s.empty_rate,
            s.chain_len_ratio,
            s.drift_holds,
            s.human_time,
            s.evidence
        );
    }
    let path = dir.join(format!("summary_{name}.csv"));
    write_file(&path, |w| w.write_all(summary.as_bytes()))?;
    written.push(path);

    let forks = pooled_forks(plan, outcomes);
    if forks.iter().any(|f| !f.is_empty()) {
        let mut reorg = String::new();
        let _ = writeln!(reorg, "{REORG_CSV_HEADER}");
        for (point, events) in plan.points.iter().zip(&forks) {
            for (depth, count) in reorg_counts(events, REORG_MAX_DEPTH).into_iter().enumerate() {
                let freq = if events.is_empty() { 0.0 } else { count as f64 / events.len() as f64 };
                let _ = writeln!(reorg, "{},{},{},{},{}", point.label, depth, events.len(), count, freq);
            }
        }
        let path = dir.join(format!("reorg_{name}.csv"));
        write_file(&path, |w| w.write_all(reorg.as_bytes()))?;
        written.push(path);
    }

    let fairness = pooled_fairness(plan, outcomes);
    if fairness.iter().any(Option::is_some) {
        let mut text = String::new();
        let _ = writeln!(text, "{FAIRNESS_CSV_HEADER}");
        for (point, tally) in plan.points.iter().zip(&fairness) {
            let Some(t) = tally else { continue };
            let dev = t.deviations();
            for (v, ((led, exp), d)) in t.led.iter().zip(&t.expected).zip(&dev).enumerate() {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{}",
                    point.label,
                    v,
                    t.epochs,
                    led,
                    exp / t.epochs.max(1) as f64,
                    d
                );
            }
        }
        let path = dir.join(format!("fairness_{name}.csv"));
        write_file(&path, |w| w.write_all(text.as_bytes()))?;
        written.push(path);
    }

    let has_bft = outcomes.iter().any(|o| o.bft.is_some());
    if has_bft || name == "bft-safety" {
        let mut text = String::new();
        let _ = writeln!(text, "{BFT_CSV_HEADER}");
        if name == "bft-safety" {
            let ex = exhaustive_double_voting(5, 3);
            let _ = writeln!(
                text,
                "exhaustive,validators<=5,,{},{},,{},true",
                ex.instances, ex.patterns, ex.conflicts
            );
        }
        for o in outcomes {
            if let Some(b) = &o.bft {
                let _ = writeln!(
                    text,
                    "run,{},{},,{},{},{},{}",
                    plan.points[o.point].label,
                    o.seed,
                    b.voting_rounds,
                    b.finalized_blocks,
                    b.conflicting_finalizations,
                    b.precondition_held
                );
            }
        }
        let path = dir.join(format!("bft_{name}.csv"));
        write_file(&path, |w| w.write_all(text.as_bytes()))?;
        written.push(path);
    }
    Ok(written)
}

/// Execute `plan` and write all of its CSVs into `dir`.
pub fn run_preset(plan: &Plan, dir: &Path, jobs: usize) -> Result<Vec<RunOutcome>, PresetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let outcomes = execute(plan, jobs, Some(dir), false)?;
    write_reports(plan, &outcomes, dir)?;
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_preset_defaults() {
        let plan = plan_preset("drift", &[]).unwrap();
        assert_eq!(plan.points.len(), 1);
        assert_eq!(plan.seeds.len(), 10);
        let cfg = &plan.points[0].config;
        assert_eq!(cfg.adversary.humans, 10);
        assert_eq!(cfg.adversary.identities, 100);
        assert_eq!(cfg.honest.count, 50);
        assert_eq!(cfg.timeline.horizon_epochs(), 3000);
        assert_eq!(cfg.protocol, crate::state::ProtocolParams::default());
    }

    #[test]
    fn sweep_points_and_overrides() {
        let plan = plan_preset("capacity-sweep", &[("T".into(), "100".into())]).unwrap();
        let ms: Vec<u32> = plan.points.iter().map(|p| p.config.adversary.humans).collect();
        assert_eq!(ms, (0..=50).step_by(5).collect::<Vec<_>>());
        assert!(plan.points.iter().all(|p| p.config.timeline.horizon_epochs() == 100));
        assert_eq!(plan.points[2].label, "m10");
        assert_eq!(plan.runs().len(), 11 * 20);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(plan_preset("nope", &[]), Err(ConfigError::UnknownPreset(_))));
        let err = plan_preset("drift", &[("slash_factor".into(), "1.5".into())]).unwrap_err();
        assert!(err.to_string().contains("protocol.slash_factor"));
        let plan = plan_preset("drift", &[("sybil_count".into(), "0".into())]).unwrap();
        assert_eq!(plan.points[0].config.adversary.identities, 0);
    }
}
