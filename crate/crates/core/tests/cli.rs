use std::path::Path;
use std::process::{Command, Output};

fn diffctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_writes_record_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = diffctl(&["validate", "--seed", "4", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS ellipticity"));
    assert!(dir.path().join("validate.jsonl").exists());
    let csv = std::fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn missing_seed_is_an_error() {
    let o = diffctl(&["validate", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    assert!(!Path::new("unused").exists());
}

#[test]
fn failing_checks_set_the_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = dir.path().join("wide_actions.toml");
    // |u tanh x| reaches 2 on this box, above the declared drift bound of 1.
    std::fs::write(
        &config,
        "seed = 1\nfixture = \"tanh_drift\"\n[actions]\nlo = [-2.0]\nhi = [2.0]\nlevels = [3]\n",
    )
    .unwrap();
    let o = diffctl(&["validate", "--config", config.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL drift_bound"));
}

#[test]
fn replay_matches_and_altered_seed_is_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, "[sampling]\npaths = 300\n").unwrap();
    let o = diffctl(&[
        "martingale",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "5",
        "--workers",
        "3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let record = dir.path().join("martingale.jsonl");
    let o = diffctl(&["replay", record.to_str().unwrap(), "--workers", "1", "--out", out]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS replay of"));
    let o = diffctl(&[
        "replay",
        record.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        out,
        "--strict",
    ]);
    assert!(stdout(&o).contains("comparison run"));
    assert!(!o.status.success(), "--strict fails on the comparison warning");
    assert_eq!(std::fs::read_to_string(&record).unwrap().lines().count(), 3);
}

#[test]
fn print_config_echoes_every_section() {
    let o = diffctl(&["h-sweep", "--seed", "1", "--print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stderr);
    for section in [
        "[grid]",
        "[sampling]",
        "[state]",
        "[actions]",
        "[observation]",
        "[sweep]",
        "[tolerance]",
    ] {
        assert!(text.contains(section), "missing {section}");
    }
}
