use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn pdq_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdq-sim")).args(args).output().expect("pdq-sim runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("aggregation.cfg");
    let out = pdq_sim(&["--scenario", path(&cfg), "--out", path(dir.path()), "--set", "workload.flows=4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean_fct_ms"), "{stdout}");
    for f in ["flows.csv", "links_timeseries.csv", "queues.csv", "summary.txt", "config.toml"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let flows = std::fs::read_to_string(dir.path().join("flows.csv")).unwrap();
    assert_eq!(flows.lines().count(), 5);
    let echo = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echo.contains("flows = 4"), "{echo}");
}

#[test]
fn seed_flag_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenario("aggregation.cfg");
    for d in [&a, &b] {
        let out = pdq_sim(&["--scenario", path(&cfg), "--seed", "9", "--out", path(d.path())]);
        assert!(out.status.success());
    }
    for f in ["flows.csv", "links_timeseries.csv", "queues.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_writes_one_row_per_seed_plus_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("aggregation.cfg");
    let out = pdq_sim(&[
        "--scenario",
        path(&cfg),
        "--out",
        path(dir.path()),
        "--sweep",
        "workload.flows=2,4",
        "--seeds",
        "1,2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| &r[2] == "mean").count(), 2);
    assert!(rows.iter().all(|r| r[3].ends_with("ok")));
    assert!(dir.path().join("workload.flows=4/seed-2/flows.csv").is_file());
}

#[test]
fn bad_input_exits_nonzero() {
    let cfg = scenario("aggregation.cfg");
    let dir = tempfile::tempdir().unwrap();
    let missing = pdq_sim(&["--scenario", "/nonexistent/x.cfg"]);
    assert_eq!(missing.status.code(), Some(3));
    let bad_set = pdq_sim(&["--scenario", path(&cfg), "--out", path(dir.path()), "--set", "noequals"]);
    assert_eq!(bad_set.status.code(), Some(1));
    let bad_value = pdq_sim(&["--scenario", path(&cfg), "--out", path(dir.path()), "--set", "loss_rate=2"]);
    assert_eq!(bad_value.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_value.stderr).contains("loss_rate"));
    let no_args = pdq_sim(&[]);
    assert!(!no_args.status.success());
}
