use std::process::Command;

fn pocmt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pocmt"))
}

#[test]
fn preset_run_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = pocmt()
        .args(["--preset", "drift", "--set", "T=50", "--seeds", "2", "--jobs", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("runs_drift.csv").exists());
    assert!(dir.path().join("summary_drift.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("drift: 2 runs"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--preset", "drift", "--set", "bogus=1"],
        vec!["--preset", "drift", "--set", "adversary.humans=x"],
        vec!["--preset", "nope"],
        vec!["--preset", "drift", "--seeds", "5..2"],
        vec![],
    ] {
        let out = pocmt().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}
