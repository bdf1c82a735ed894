use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};
use pocmt_core::config::{parse_override, ConfigError};
use pocmt_core::preset::{load_config, run_preset, summarize, PresetError, PRESETS};

/// Run PoCmt simulation experiments and write CSV results.
#[derive(Debug, Parser)]
#[command(name = "pocmt", version)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
struct Args {
    /// Named preset: drift, capacity-sweep, fairness, decay-ablation,
    /// common-prefix, bft-safety.
    #[arg(long)]
    preset: Option<String>,
    /// Config file of `section.key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override applied after the preset or file, e.g. `protocol.lambda=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seeds: a count `N` (0..N), a range `A..B`, or a list `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let num = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("--seeds `{spec}`: {e}"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a >= b {
            return Err(format!("--seeds `{spec}`: empty range"));
        }
        return Ok((a..b).collect());
    }
    if spec.contains(',') {
        return spec.split(',').map(num).collect();
    }
    let n = num(spec)?;
    if n == 0 {
        return Err("--seeds: count must be >= 1".into());
    }
    Ok((0..n).collect())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PresetError::Sim { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(args: &Args) -> Result<(), PresetError> {
    let overrides = args
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let source = match (&args.preset, &args.config) {
        (Some(p), _) => p.clone(),
        (None, Some(path)) => path.display().to_string(),
        (None, None) => unreachable!("clap enforces a source"),
    };
    if args.preset.is_some() && !PRESETS.contains(&source.as_str()) {
        return Err(ConfigError::UnknownPreset(source).into());
    }
    let mut plan = load_config(&source, &overrides)?;
    if let Some(spec) = &args.seeds {
        let seeds = parse_seeds(spec).map_err(|message| ConfigError::Invalid {
            key: "--seeds".into(),
            message,
        })?;
        plan = plan.with_seeds(seeds);
    }
    let outcomes = run_preset(&plan, &args.out, args.jobs)?;
    println!(
        "{}: {} runs over {} parameter points -> {}",
        plan.name,
        outcomes.len(),
        plan.points.len(),
        args.out.display()
    );
    for s in summarize(&plan, &outcomes) {
        println!(
            "  {:<12} leader_share {:.4} ± {:.4}  weight_share {:.4} ± {:.4}  chain/T {:.3}  drift {}",
            s.label,
            s.leader_share.0,
            s.leader_share.1,
            s.final_weight_share.0,
            s.final_weight_share.1,
            s.chain_len_ratio,
            if s.drift_holds { "ok" } else { "violated" }
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("3"), Ok(vec![0, 1, 2]));
        assert_eq!(parse_seeds("5..8"), Ok(vec![5, 6, 7]));
        assert_eq!(parse_seeds("1,4,9"), Ok(vec![1, 4, 9]));
        assert!(parse_seeds("8..5").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("0").is_err());
    }
}
