use std::fs;

use pocmt_core::config::ConfigError;
use pocmt_core::preset::{
    load_config, plan_preset, run_preset, BFT_CSV_HEADER, PRESETS, REORG_CSV_HEADER, RUNS_CSV_HEADER,
    SUMMARY_CSV_HEADER,
};
use pocmt_core::sim::{EPOCH_CSV_HEADER, WINDOW_CSV_HEADER};

fn short() -> Vec<(String, String)> {
    vec![("T".into(), "60".into())]
}

fn first_line(path: &std::path::Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn every_preset_writes_its_reports() {
    let dir = tempfile::tempdir().unwrap();
    for name in PRESETS {
        let plan = plan_preset(name, &short()).unwrap().with_seeds(vec![0, 1]);
        let outcomes = run_preset(&plan, dir.path(), 1).unwrap();
        assert_eq!(outcomes.len(), plan.points.len() * 2);
        assert_eq!(first_line(&dir.path().join(format!("runs_{name}.csv"))), RUNS_CSV_HEADER);
        assert_eq!(first_line(&dir.path().join(format!("summary_{name}.csv"))), SUMMARY_CSV_HEADER);
        let label = &plan.points[0].label;
        let stem = format!("{name}_{label}_0");
        assert_eq!(first_line(&dir.path().join(format!("trace_{stem}.csv"))), EPOCH_CSV_HEADER);
        assert_eq!(first_line(&dir.path().join(format!("windows_{stem}.csv"))), WINDOW_CSV_HEADER);
        let rows = fs::read_to_string(dir.path().join(format!("trace_{stem}.csv"))).unwrap();
        assert_eq!(rows.lines().count(), 61);
    }
    assert_eq!(first_line(&dir.path().join("reorg_common-prefix.csv")), REORG_CSV_HEADER);
    let bft = fs::read_to_string(dir.path().join("bft_bft-safety.csv")).unwrap();
    assert_eq!(bft.lines().next().unwrap(), BFT_CSV_HEADER);
    assert!(bft.lines().any(|l| l.starts_with("exhaustive,")));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.cfg");
    fs::write(&path, "# small run\ntimeline.horizon_epochs = 40\nadversary.humans = 3\nsim.seed = 7\n").unwrap();
    let plan = load_config(path.to_str().unwrap(), &[("hco.tau_h".into(), "2".into())]).unwrap();
    assert_eq!(plan.name, "small");
    assert_eq!(plan.seeds, vec![7]);
    let cfg = plan.config_for(0, 7);
    assert_eq!(cfg.timeline.horizon_epochs(), 40);
    assert_eq!(cfg.adversary.humans, 3);
    assert_eq!(cfg.hco.tau_h, 2);
}

#[test]
fn bad_sources_and_keys_are_reported() {
    assert!(matches!(load_config("no-such-preset", &[]), Err(ConfigError::UnknownPreset(_))));
    let err = plan_preset("drift", &[("no_such_key".into(), "1".into())]).unwrap_err();
    assert!(matches!(err, ConfigError::UnknownKey(_)), "{err:?}");
    let err = plan_preset("drift", &[("adversary.humans".into(), "-1".into())]).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { .. }), "{err:?}");
}
