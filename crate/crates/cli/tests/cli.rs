use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdibarrier::config::RunConfig;
use sdibarrier::{CertificateReport, TrajectoryBatch};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], cfg: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sdibarrier"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = cfg {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn with_edit(dir: &Path, base: &str, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(config(base)).unwrap();
    assert!(text.contains(from), "{from}");
    let path = dir.join(base);
    fs::write(&path, text.replacen(from, to, 1)).unwrap();
    path
}

#[test]
fn verify_exit_code_reflects_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify"], Some(&config("interval_sum.toml")), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let reports: Vec<CertificateReport> =
        serde_json::from_slice(&fs::read(dir.path().join("certificates.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].value, 5.0);

    let cfg = with_edit(dir.path(), "interval_sum.toml", "x0 = [1.0]", "x0 = [1.5]");
    let out = run(&["verify"], Some(&cfg), &dir.path().join("fail"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = run(&["verify"], Some(&empty), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let cfg = with_edit(dir.path(), "interval_sum.toml", "n_traj = 1000", "n_traj = 0");
    let out = run(&["simulate"], Some(&cfg), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["verify"], Some(&dir.path().join("missing.toml")), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let cfg = with_edit(dir.path(), "trace.toml", "seed = 21", "");
    let out = run(&["simulate"], Some(&cfg), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn probe_failure_refuses_without_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify"], Some(&config("polytopic.toml")), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["verify", "--assume-convex"], Some(&config("polytopic.toml")), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let reports: Vec<CertificateReport> =
        serde_json::from_slice(&fs::read(dir.path().join("certificates.json")).unwrap()).unwrap();
    assert!(reports.iter().all(|r| r.advisory && r.ok));
    assert!(reports.iter().any(|r| r.bound == 1.0 / 3.0));
}

#[test]
fn dump_effective_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["verify", "--seed", "5", "--samples", "77", "--dump-effective-config"],
        Some(&config("trace.toml")),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let dumped = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(dumped.run.seed, Some(5));
    assert_eq!(dumped.run.samples, Some(77));
    let original = RunConfig::from_path(&config("trace.toml")).unwrap();
    assert_eq!(dumped.problem, original.problem);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn seed_flag_changes_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["simulate"], Some(&config("trace.toml")), &a);
    run(&["simulate", "--seed", "22"], Some(&config("trace.toml")), &b);
    let ba: TrajectoryBatch = serde_json::from_slice(&fs::read(a.join("batch.json")).unwrap()).unwrap();
    let bb: TrajectoryBatch = serde_json::from_slice(&fs::read(b.join("batch.json")).unwrap()).unwrap();
    assert_eq!((ba.seed, bb.seed), (21, 22));
    assert_ne!(ba.records, bb.records);
}

#[test]
fn report_summarizes_existing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["report"], None, dir.path());
    assert_ne!(out.status.code(), Some(0));
    let cfg = config("trace.toml");
    run(&["verify", "--assume-convex"], Some(&cfg), dir.path());
    run(&["simulate"], Some(&cfg), dir.path());
    let out = run(&["report"], None, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("InfiniteHorizon"), "{text}");
    assert!(text.contains("Consistent") || text.contains("Violation"), "{text}");
}

#[test]
fn traces_are_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    run(&["simulate"], Some(&config("trace.toml")), dir.path());
    assert!(!dir.path().join("traces.csv").exists());
    run(&["simulate", "--emit-traces"], Some(&config("trace.toml")), dir.path());
    let text = fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    assert!(text.starts_with("id,step,v,x_0,x_1,x_2,b"));
}
