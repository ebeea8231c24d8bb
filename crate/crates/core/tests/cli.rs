mod common;

use std::fs;
use std::process::{Command, Output};

use common::fixture;

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_essay-scorer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    out
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn features_table_has_one_row_per_essay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("features.tsv");
    let dataset = fixture("asap_fixture.tsv");
    let meta = fixture("asap_fixture_meta.toml");
    ok(&[
        "features",
        "--dataset",
        dataset.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let table = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 41);
    assert_eq!(lines[0].split('\t').count(), 11);
    assert!(lines[1].starts_with("1\t"));
}

#[test]
fn split_writes_fold_lines() {
    let dataset = fixture("asap_fixture.tsv");
    let meta = fixture("asap_fixture_meta.toml");
    let args = [
        "split",
        "--dataset",
        dataset.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
        "--k",
        "5",
        "--seed",
        "42",
    ];
    let first = ok(&args);
    assert_eq!(first.lines().count(), 40);
    assert!(first.lines().all(|l| {
        let (_, fold) = l.split_once('\t').unwrap();
        fold.parse::<usize>().unwrap() < 5
    }));
    assert_eq!(first, ok(&args));
}

#[test]
fn run_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let config = fixture("run_echo.toml");
    let table = ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(table
        .lines()
        .any(|l| l.starts_with("Avg.") && l.contains("1.000")));
    let json = tmp.path().join("copy.json");
    let again = ok(&[
        "evaluate",
        dir.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(table, again);
    assert_eq!(
        fs::read(json).unwrap(),
        fs::read(dir.join("report.json")).unwrap()
    );
    ok(&["parse", dir.to_str().unwrap()]);

    let refused = run(&[
        "score",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("already holds a run"));
}

#[test]
fn bad_config_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "output_dir = 1\n").unwrap();
    let out = run(&["score", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config:"));
}
