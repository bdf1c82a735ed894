//! Flat `section.key=value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! timeline.horizon_epochs=3000
//! protocol.lambda=0.05
//! adversary.sybil_count=100
//! ```
//!
//! Keys may use the field name, a short alias (`lambda`, `theta`, `delta`,
//! ...) or, when unambiguous, omit the section. Unknown keys are rejected.
//! [`serialize`] always emits canonical keys and [`parse`] reads them back to
//! an equal config.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::sim::ExperimentConfig;
use crate::timeline::Timeline;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("ambiguous config key `{key}`: matches {candidates}")]
    AmbiguousKey { key: String, candidates: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{0}")]
    Io(String),
}

/// Canonical keys with their accepted aliases, in serialization order.
const KEYS: &[(&str, &[&str])] = &[
    ("timeline.epochs_per_window", &["E"]),
    ("timeline.horizon_epochs", &["T", "horizon"]),
    ("protocol.weight_engagement", &["alpha"]),
    ("protocol.weight_participation", &["beta"]),
    ("protocol.weight_availability", &["gamma"]),
    ("protocol.boost_engagement", &["kappa_h"]),
    ("protocol.boost_participation", &["kappa_p"]),
    ("protocol.boost_availability", &["kappa_u"]),
    ("protocol.decay_rate", &["lambda"]),
    ("protocol.slash_factor", &["delta"]),
    ("protocol.leader_scale", &["theta"]),
    ("protocol.committee_scale", &["c"]),
    ("protocol.availability_cap", &[]),
    ("protocol.engagement_decay", &[]),
    ("protocol.offline_participation", &[]),
    ("hco.honest_solve_prob", &[]),
    ("hco.automated_solve_prob", &["epsilon"]),
    ("hco.challenge_rate", &["k"]),
    ("hco.tau_h", &["human_solve_cap"]),
    ("election.tie_break", &[]),
    ("election.beacon_domain_tag", &[]),
    ("honest.count", &["honest_count"]),
    ("honest.online_prob", &["honest_online_prob"]),
    ("adversary.sybil_count", &["identities", "s"]),
    ("adversary.humans", &["adversary_humans", "m"]),
    ("adversary.strategy", &["adversary_strategy"]),
    ("adversary.online_policy", &[]),
    ("adversary.equivocate", &[]),
    ("adversary.private_fork", &[]),
    ("adversary.fork_patience", &[]),
    ("sim.seed", &[]),
    ("sim.epoch_dynamics", &[]),
    ("sim.rho", &[]),
    ("sim.warmup", &[]),
    ("sim.bft", &[]),
    ("sim.retain_scores", &[]),
];

/// Resolve a user-supplied key to its canonical form.
pub fn resolve_key(key: &str) -> Result<&'static str, ConfigError> {
    let key = key.trim();
    let matches = |name: &str, aliases: &[&str], wanted: &str| name == wanted || aliases.contains(&wanted);
    let found: Vec<&'static str> = match key.split_once('.') {
        Some((section, name)) => KEYS
            .iter()
            .filter(|(canon, aliases)| {
                let (s, n) = canon.split_once('.').expect("canonical keys are dotted");
                s == section && matches(n, aliases, name)
            })
            .map(|(canon, _)| *canon)
            .collect(),
        None => KEYS
            .iter()
            .filter(|(canon, aliases)| {
                let (_, n) = canon.split_once('.').expect("canonical keys are dotted");
                matches(n, aliases, key)
            })
            .map(|(canon, _)| *canon)
            .collect(),
    };
    match found.as_slice() {
        [one] => Ok(one),
        [] => Err(ConfigError::UnknownKey(key.to_string())),
        many => Err(ConfigError::AmbiguousKey {
            key: key.to_string(),
            candidates: many.join(", "),
        }),
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| ConfigError::Invalid {
        key: key.to_string(),
        message: format!("cannot parse `{}`: {e}", raw.trim()),
    })
}

fn boolean(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(ConfigError::Invalid {
            key: key.to_string(),
            message: format!("expected a boolean, got `{other}`"),
        }),
    }
}

fn timeline(key: &str, e: u64, t: u64) -> Result<Timeline, ConfigError> {
    Timeline::new(e, t).map_err(|err| ConfigError::Invalid {
        key: key.to_string(),
        message: err.to_string(),
    })
}

/// Assign `raw` to `key` in `cfg`. Only the parsed field is checked here;
/// call [`validate`] once all assignments are done.
pub fn set(cfg: &mut ExperimentConfig, key: &str, raw: &str) -> Result<(), ConfigError> {
    let canon = resolve_key(key)?;
    let k = canon;
    match canon {
        "timeline.epochs_per_window" => {
            cfg.timeline = timeline(k, value(k, raw)?, cfg.timeline.horizon_epochs())?
        }
        "timeline.horizon_epochs" => {
            cfg.timeline = timeline(k, cfg.timeline.epochs_per_window(), value(k, raw)?)?
        }
        "protocol.weight_engagement" => cfg.protocol.weight_engagement = value(k, raw)?,
        "protocol.weight_participation" => cfg.protocol.weight_participation = value(k, raw)?,
        "protocol.weight_availability" => cfg.protocol.weight_availability = value(k, raw)?,
        "protocol.boost_engagement" => cfg.protocol.boost_engagement = value(k, raw)?,
        "protocol.boost_participation" => cfg.protocol.boost_participation = value(k, raw)?,
        "protocol.boost_availability" => cfg.protocol.boost_availability = value(k, raw)?,
        "protocol.decay_rate" => cfg.protocol.decay_rate = value(k, raw)?,
        "protocol.slash_factor" => cfg.protocol.slash_factor = value(k, raw)?,
        "protocol.leader_scale" => cfg.protocol.leader_scale = value(k, raw)?,
        "protocol.committee_scale" => cfg.protocol.committee_scale = value(k, raw)?,
        "protocol.availability_cap" => {
            cfg.protocol.availability_cap = match raw.trim() {
                "none" | "" => None,
                other => Some(value(k, other)?),
            }
        }
        "protocol.engagement_decay" => cfg.protocol.engagement_decay = value(k, raw)?,
        "protocol.offline_participation" => cfg.protocol.offline_participation = value(k, raw)?,
        "hco.honest_solve_prob" => cfg.hco.honest_solve_prob = value(k, raw)?,
        "hco.automated_solve_prob" => cfg.hco.automated_solve_prob = value(k, raw)?,
        "hco.challenge_rate" => cfg.hco.challenge_rate = value(k, raw)?,
        "hco.tau_h" => cfg.hco.tau_h = value(k, raw)?,
        "election.tie_break" => cfg.election.tie_break = value(k, raw)?,
        "election.beacon_domain_tag" => cfg.election.beacon_domain_tag = raw.trim().to_string(),
        "honest.count" => cfg.honest.count = value(k, raw)?,
        "honest.online_prob" => cfg.honest.online_prob = value(k, raw)?,
        "adversary.sybil_count" => cfg.adversary.identities = value(k, raw)?,
        "adversary.humans" => cfg.adversary.humans = value(k, raw)?,
        "adversary.strategy" => cfg.adversary.strategy = value(k, raw)?,
        "adversary.online_policy" => cfg.adversary.online_policy = value(k, raw)?,
        "adversary.equivocate" => cfg.adversary.equivocate = boolean(k, raw)?,
        "adversary.private_fork" => cfg.adversary.private_fork = boolean(k, raw)?,
        "adversary.fork_patience" => cfg.adversary.fork_patience = value(k, raw)?,
        "sim.seed" => cfg.seed = value(k, raw)?,
        "sim.epoch_dynamics" => cfg.sim.epoch_dynamics = boolean(k, raw)?,
        "sim.rho" => cfg.sim.rho = value(k, raw)?,
        "sim.warmup" => cfg.sim.warmup = value(k, raw)?,
        "sim.bft" => cfg.sim.bft = boolean(k, raw)?,
        "sim.retain_scores" => cfg.sim.retain_scores = boolean(k, raw)?,
        _ => unreachable!("every canonical key is handled"),
    }
    Ok(())
}

/// Check every sub-config, attributing failures to a key.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    use crate::adversary::AdversaryError;
    use crate::hco::HcoError;
    use crate::state::StateError;

    let invalid = |key: &str, message: String| ConfigError::Invalid {
        key: key.to_string(),
        message,
    };
    if let Err(e) = cfg.protocol.validate() {
        let key = match &e {
            StateError::InvalidParam { field, .. } => format!("protocol.{field}"),
            StateError::SolvedExceedsRate { .. } => "protocol".into(),
        };
        return Err(invalid(&key, e.to_string()));
    }
    if let Err(e) = cfg.hco.validate() {
        let key = match &e {
            HcoError::InvalidParam { field, .. } => format!("hco.{field}"),
            _ => "hco".into(),
        };
        return Err(invalid(&key, e.to_string()));
    }
    if let Err(e) = cfg.adversary.validate() {
        let key = match e {
            AdversaryError::RotateFraction(_) => "adversary.online_policy",
            AdversaryError::ConflictingBehaviour => "adversary.private_fork",
        };
        return Err(invalid(key, e.to_string()));
    }
    cfg.validate().map_err(|e| {
        let msg = e.to_string();
        let key = ["honest.count", "honest.online_prob", "sim.rho", "sim.warmup"]
            .into_iter()
            .find(|k| msg.contains(k))
            .unwrap_or("config");
        invalid(key, msg)
    })
}

/// Apply `key=value` lines on top of `base`. Blank lines and `#` comments
/// are skipped.
pub fn apply_text(base: &mut ExperimentConfig, text: &str) -> Result<(), ConfigError> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, raw) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: line.to_string(),
        })?;
        set(base, key, raw)?;
    }
    Ok(())
}

/// Parse a full config; unspecified keys keep their defaults.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    apply_text(&mut cfg, text)?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Parse a single `key=value` override.
pub fn parse_override(text: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = text.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 1,
        text: text.to_string(),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Canonical text form, one key per line in a fixed order.
pub fn serialize(cfg: &ExperimentConfig) -> String {
    let p = &cfg.protocol;
    let a = &cfg.adversary;
    let cap = p.availability_cap.map_or("none".to_string(), |c| c.to_string());
    let values: Vec<String> = vec![
        cfg.timeline.epochs_per_window().to_string(),
        cfg.timeline.horizon_epochs().to_string(),
        p.weight_engagement.to_string(),
        p.weight_participation.to_string(),
        p.weight_availability.to_string(),
        p.boost_engagement.to_string(),
        p.boost_participation.to_string(),
        p.boost_availability.to_string(),
        p.decay_rate.to_string(),
        p.slash_factor.to_string(),
        p.leader_scale.to_string(),
        p.committee_scale.to_string(),
        cap,
        p.engagement_decay.to_string(),
        p.offline_participation.as_str().to_string(),
        cfg.hco.honest_solve_prob.to_string(),
        cfg.hco.automated_solve_prob.to_string(),
        cfg.hco.challenge_rate.to_string(),
        cfg.hco.tau_h.to_string(),
        cfg.election.tie_break.to_string(),
        cfg.election.beacon_domain_tag.clone(),
        cfg.honest.count.to_string(),
        cfg.honest.online_prob.to_string(),
        a.identities.to_string(),
        a.humans.to_string(),
        a.strategy.to_string(),
        a.online_policy.to_string(),
        a.equivocate.to_string(),
        a.private_fork.to_string(),
        a.fork_patience.to_string(),
        cfg.seed.to_string(),
        cfg.sim.epoch_dynamics.to_string(),
        cfg.sim.rho.to_string(),
        cfg.sim.warmup.to_string(),
        cfg.sim.bft.to_string(),
        cfg.sim.retain_scores.to_string(),
    ];
    debug_assert_eq!(values.len(), KEYS.len());
    let mut out = String::new();
    for ((key, _), v) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{key}={v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::OnlinePolicy;
    use crate::hco::{AllocationStrategy, ChallengeSchedule};
    use proptest::prelude::*;

    #[test]
    fn key_resolution() {
        assert_eq!(resolve_key("protocol.lambda"), Ok("protocol.decay_rate"));
        assert_eq!(resolve_key("sybil_count"), Ok("adversary.sybil_count"));
        assert_eq!(resolve_key("adversary_humans"), Ok("adversary.humans"));
        assert_eq!(resolve_key("slash_factor"), Ok("protocol.slash_factor"));
        assert!(matches!(resolve_key("protocol.bogus"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(resolve_key("hco.lambda"), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn invalid_values_name_their_key() {
        let err = parse("slash_factor=1.5").unwrap_err();
        assert!(err.to_string().starts_with("protocol.slash_factor:"), "{err}");
        let err = parse("adversary.online_policy=rotate:2").unwrap_err();
        assert!(err.to_string().starts_with("adversary.online_policy:"), "{err}");
        let err = parse("timeline.epochs_per_window=0").unwrap_err();
        assert!(err.to_string().starts_with("timeline.epochs_per_window:"), "{err}");
        let err = parse("sim.rho=abc").unwrap_err();
        assert!(err.to_string().starts_with("sim.rho:"), "{err}");
        assert!(matches!(parse("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn empty_adversary_override() {
        let cfg = parse("sybil_count=0").unwrap();
        assert_eq!(cfg.adversary.identities, 0);
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(parse(&serialize(&cfg)).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn round_trip(
            e in 1u64..10,
            t in 1u64..5000,
            lambda in 0.001f64..1.0,
            delta in 0.01f64..0.99,
            cap in proptest::option::of(0.5f64..100.0),
            k in proptest::collection::vec(1u32..4, 1..4),
            s in 0u32..300,
            m in 0u32..300,
            frac in 0.0f64..=1.0,
            seed in any::<u64>(),
            bft in any::<bool>(),
        ) {
            let mut cfg = ExperimentConfig {
                timeline: Timeline::new(e, t).unwrap(),
                seed,
                ..Default::default()
            };
            cfg.protocol.decay_rate = lambda;
            cfg.protocol.slash_factor = delta;
            cfg.protocol.availability_cap = cap;
            cfg.hco.challenge_rate = if k.len() == 1 { ChallengeSchedule::Constant(k[0]) } else { ChallengeSchedule::Cycle(k) };
            cfg.adversary.identities = s;
            cfg.adversary.humans = m;
            cfg.adversary.strategy = AllocationStrategy::Rotate { period: 2 };
            cfg.adversary.online_policy = OnlinePolicy::Rotate(frac);
            cfg.sim.bft = bft;
            prop_assert_eq!(parse(&serialize(&cfg)).unwrap(), cfg);
        }
    }
}
