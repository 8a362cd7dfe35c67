use std::path::Path;
use std::process::{Command, Output};

use ris_cutoff::harness::records::{load_records, load_summaries};
use ris_cutoff::harness::RealizationId;

fn ris_cutoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-cutoff")).args(args).output().unwrap()
}

fn quick(out: &Path) -> Vec<String> {
    [
        "--out",
        out.to_str().unwrap(),
        "--n-noise",
        "10",
        "--final-noise",
        "20",
        "--max-iters",
        "5",
        "--sca-outer-iters",
        "5",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn gradcheck_passes() {
    let out = ris_cutoff(&["gradcheck", "--points", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn optimize_writes_both_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["optimize".to_string(), "--seed".into(), "3".into()];
    args.extend(quick(dir.path()));
    let out = ris_cutoff(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let records = load_records(&dir.path().join("optimize_iterations.csv")).unwrap();
    let summaries = load_summaries(&dir.path().join("optimize_summary.csv")).unwrap();
    assert!(!records.is_empty());
    // One realization and its mean, for each of the two methods.
    assert_eq!(summaries.len(), 4);
    assert!(summaries.iter().any(|s| s.realization == RealizationId::Mean));
    assert!(summaries.iter().all(|s| s.iterations <= 5));
}

#[test]
fn set_overrides_and_sweep_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep".to_string(),
        "--method".into(),
        "pgm".into(),
        "--realizations".into(),
        "1".into(),
        "--set".into(),
        "modulation.kind=psk".into(),
        "--grid".into(),
        "modulation.order=2,4".into(),
    ];
    args.extend(quick(dir.path()));
    let out = ris_cutoff(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summaries = load_summaries(&dir.path().join("sweep_summary.csv")).unwrap();
    let mut runs: Vec<_> = summaries.iter().map(|s| s.run_id.as_str()).collect();
    runs.dedup();
    assert_eq!(runs, ["sweep-0", "sweep-1"]);
}

#[test]
fn bad_input_fails_cleanly() {
    let out = ris_cutoff(&["optimize", "--set", "no_such_key=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = ris_cutoff(&["optimize", "--modulation-order", "6"]);
    assert!(!out.status.success());
}
