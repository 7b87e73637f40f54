//! Acceptance criteria 1 to 10. Each test prints one `PASS`/`FAIL` line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Rotation2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdibarrier::systems::{interval_shift_problem, lifted_quadratic_problem, polytopic_problem, trace_problem};
use sdibarrier::*;

const THRESHOLD_SUM_TOL: f64 = 1e-6;
const THRESHOLD_CONCAVE_TOL: f64 = 1e-6;
const THRESHOLD_LIFTED_TOL: f64 = 1e-3;
const THRESHOLD_RUNTIME: Duration = Duration::from_secs(1);
const MARGIN_TOL: f64 = 1e-12;
const SIM_TRAJECTORIES: usize = 10_000;
const SIM_HORIZON: usize = 30;
const SIM_SEED: u64 = 2024;
const SIM_RUNTIME: Duration = Duration::from_secs(30);
const ORACLE_INSTANCES: usize = 1000;
const ORACLE_MAX_K: usize = 6;
const ORACLE_TOL: f64 = 1e-9;
const MC_SAMPLES: usize = 100_000;
const CI_MULTIPLIER: f64 = 3.0;

/// Written to the raw stderr handle so the line shows without `--nocapture`.
fn report(criterion: u32, ok: bool, detail: String) {
    let line = format!("criterion {criterion:>2}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sdibarrier")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_cli(args: &[&str], cfg: &Path, out: &Path) -> (i32, Duration) {
    let start = Instant::now();
    let status = Command::new(bin())
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (status.status.code().unwrap_or(-1), start.elapsed())
}

fn cli_threshold(cfg: &str) -> (f64, Duration, i32) {
    let dir = tempfile::tempdir().unwrap();
    let (code, elapsed) = run_cli(&["threshold"], &config(cfg), dir.path());
    let text = fs::read_to_string(dir.path().join("threshold.json")).unwrap();
    let result: ThresholdResult = serde_json::from_str(&text).unwrap();
    (result.threshold, elapsed, code)
}

fn threshold_criterion(criterion: u32, cfg: &str, expected: f64, tol: f64) {
    let (t, elapsed, code) = cli_threshold(cfg);
    let ok = code == 0 && (t - expected).abs() <= tol && elapsed < THRESHOLD_RUNTIME;
    report(
        criterion,
        ok,
        format!("threshold={t:.9} expected={expected:.9} tol={tol:e} runtime={elapsed:?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_01_sum_bound_threshold() {
    threshold_criterion(1, "interval_sum.toml", 1.0, THRESHOLD_SUM_TOL);
}

#[test]
fn criterion_02_concave_sup_threshold() {
    threshold_criterion(2, "interval_concave.toml", 4.6, THRESHOLD_CONCAVE_TOL);
}

#[test]
fn criterion_03_lifted_quadratic_threshold() {
    let (t, _, _) = cli_threshold("quadratic_lifted.toml");
    assert!((t - (5.0 - 68.0 / 150.0)).abs() < 1e-8, "closed form {t}");
    threshold_criterion(3, "quadratic_lifted.toml", 4.547, THRESHOLD_LIFTED_TOL);
}

fn forced_options() -> VerifyOptions {
    VerifyOptions {
        assume_convex: true,
        probe_seed: 7,
        ..VerifyOptions::default()
    }
}

#[test]
fn criterion_04_polytopic_supermartingale() {
    let p = polytopic_problem();
    let sm = supermartingale_check(&p, &CheckPoints::BoxVertices, &LambdaEngine::default()).unwrap();
    let margins_ok = !sm.margins.is_empty()
        && !sm.approximate
        && sm.margins.iter().all(|w| (w.value + 0.15).abs() <= MARGIN_TOL);
    let cert = infinite_horizon_bound(&p, &CheckPoints::BoxVertices, &forced_options()).unwrap();
    let bound_ok = (cert.bound - 1.0 / 3.0).abs() <= MARGIN_TOL && cert.ok;
    let ok = margins_ok && bound_ok && sm.passed;
    report(
        4,
        ok,
        format!(
            "margins={:?} bound={} advisory={} (graph convexity probe fails for this hull; certified under the override)",
            sm.margins.iter().map(|w| w.value).collect::<Vec<_>>(),
            cert.bound,
            cert.advisory
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_trace_infinite_horizon_bound() {
    let p = trace_problem();
    let sm = supermartingale_check(&p, &CheckPoints::BoxVertices, &LambdaEngine::default()).unwrap();
    let cert = infinite_horizon_bound(&p, &CheckPoints::BoxVertices, &forced_options()).unwrap();
    let stamped = cert.advisory
        && cert
            .assumptions_checked
            .iter()
            .any(|a| a.name == "map_graph_convexity" && !a.passed)
        && cert.notes.iter().any(|n| n.contains("structural assumption unverified"));
    let ok = sm.passed && sm.margins.iter().all(|w| w.value.abs() <= MARGIN_TOL) && cert.bound == 0.25 && stamped;
    report(
        5,
        ok,
        format!("max_margin={} bound={} advisory_stamp={stamped}", sm.max_margin, cert.bound),
    );
    assert!(ok);
}

#[test]
fn criterion_06_trace_simulation_consistency() {
    let p = trace_problem();
    let start = Instant::now();
    let (batch, _) = run_batch(
        &p,
        &p.initial,
        SIM_TRAJECTORIES,
        SIM_HORIZON,
        &AdversaryPolicy::UniformRandomExtreme,
        SIM_SEED,
        false,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let ok = batch.wilson_ci_95.0 <= 0.25 && elapsed < SIM_RUNTIME;
    report(
        6,
        ok,
        format!(
            "hits={}/{} domain_exits={} wilson95=[{:.4}, {:.4}] runtime={elapsed:?}",
            batch.hits, batch.n_traj, batch.domain_exits, batch.wilson_ci_95.0, batch.wilson_ci_95.1
        ),
    );
    assert!(ok);
}

fn random_symmetric<R: Rng>(rng: &mut R) -> DMatrix<f64> {
    let (a, b, d) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    DMatrix::from_row_slice(2, 2, &[a, b, b, d])
}

fn random_affine<R: Rng>(rng: &mut R, dim: usize) -> BarrierSpec {
    let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    BarrierSpec::affine(rng.random_range(-1.0..1.0), c, 1.0, 2.0).unwrap()
}

fn random_dist<R: Rng>(rng: &mut R) -> InputDistribution {
    let lo = rng.random_range(-1.0..1.0);
    InputDistribution::uniform(lo, lo + rng.random_range(0.0..1.0)).unwrap()
}

/// Random instance of one closed-form class; returns the worst |closed form - tree|.
fn oracle_gap(class: &str, rng: &mut ChaCha8Rng) -> f64 {
    let dist = random_dist(rng);
    let (dynamics, barrier, x) = match class {
        "interval_shift" => (
            Dynamics::Base(MapSpec::IntervalShift),
            random_affine(rng, 1),
            StateVector::scalar(rng.random_range(-5.0..5.0)),
        ),
        "quadratic_interval" => (
            Dynamics::Base(MapSpec::QuadraticInterval),
            random_affine(rng, 1),
            StateVector::scalar(rng.random_range(-5.0..5.0)),
        ),
        "lifted_quadratic" => (
            Dynamics::Lifted(lift_moments(&MapSpec::QuadraticInterval, &[1, 2], &dist).unwrap()),
            random_affine(rng, 1),
            StateVector::scalar(rng.random_range(-5.0..5.0)),
        ),
        "unitary_trace" => {
            let mut u = Rotation2::new(rng.random_range(0.0..std::f64::consts::TAU)).into_inner();
            if rng.random_bool(0.5) {
                u.set_column(1, &(-u.column(1)));
            }
            let u = DMatrix::from_column_slice(2, 2, u.as_slice());
            let map = MapSpec::unitary(u, random_symmetric(rng), random_symmetric(rng)).unwrap();
            let x = StateVector::from_matrix(&random_symmetric(rng)).unwrap();
            (Dynamics::Base(map), BarrierSpec::trace(rng.random_range(-1.0..1.0), 1.0, 2.0).unwrap(), x)
        }
        "polytopic_affine" => {
            let n = rng.random_range(2..=3);
            let a = (0..n)
                .map(|_| DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.5..1.5)))
                .collect();
            let b = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let x = StateVector::vector(vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).unwrap();
            (Dynamics::Base(MapSpec::polytopic(a, b).unwrap()), random_affine(rng, 2), x)
        }
        other => unreachable!("{other}"),
    };
    let engine = LambdaEngine::default();
    assert!(engine.has_closed_form(&dynamics, &barrier), "{class}");
    let k = rng.random_range(0..=ORACLE_MAX_K);
    let path = InputPath::sample(&dynamics, &dist, k, rng);
    let cf = engine.closed_form(&dynamics, &barrier, &x, &path).unwrap();
    let tree = engine
        .exact_tree(&dynamics, LambdaTarget::Barrier(&barrier), &x, &path)
        .unwrap();
    (cf - tree).abs()
}

#[test]
fn criterion_07_closed_forms_match_the_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ok = true;
    let mut worst = Vec::new();
    for class in ["interval_shift", "quadratic_interval", "lifted_quadratic", "unitary_trace", "polytopic_affine"] {
        let gap = (0..ORACLE_INSTANCES)
            .map(|_| oracle_gap(class, &mut rng))
            .fold(0.0, f64::max);
        ok &= gap <= ORACLE_TOL;
        worst.push(format!("{class}={gap:.1e}"));
    }
    report(
        7,
        ok,
        format!("{ORACLE_INSTANCES} instances per class, k<={ORACLE_MAX_K}, worst gaps {}", worst.join(" ")),
    );
    assert!(ok);
}

#[test]
fn criterion_08_jensen_mean_substitution() {
    let engine = LambdaEngine::default();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, p, x) in [
        ("interval_shift", interval_shift_problem(), 1.0),
        ("lifted_quadratic", lifted_quadratic_problem(), 4.5),
    ] {
        let x = StateVector::scalar(x);
        for k in 1..=4 {
            let est = engine
                .ell_estimate(&p.dynamics, &p.barrier, &p.dist, &x, k, MC_SAMPLES, &mut rng)
                .unwrap();
            let at_mean = engine.at_mean(&p.dynamics, &p.barrier, &p.dist, &x, k).unwrap();
            let pass = est.mean <= at_mean + CI_MULTIPLIER * est.half_width_95;
            ok &= pass;
            lines.push(format!("{name} k={k}: {:.5}<={:.5}+3*{:.1e}", est.mean, at_mean, est.half_width_95));
        }
    }
    report(8, ok, lines.join("; "));
    assert!(ok);
}

fn markov_check(x: f64, seed: u64) -> (bool, String) {
    let p = interval_shift_problem();
    let engine = LambdaEngine::default();
    let delta = p.barrier.unsafe_level;
    let n = 4;
    let x = StateVector::scalar(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sup = engine
        .sup_over_horizon(
            &p.dynamics,
            &p.barrier,
            &p.dist,
            &x,
            n,
            HorizonMethod::MonteCarlo { samples: MC_SAMPLES },
            &mut rng,
        )
        .unwrap();
    let mut hits = 0usize;
    for _ in 0..MC_SAMPLES {
        let path = InputPath::sample(&p.dynamics, &p.dist, n, &mut rng);
        let (best, _) = engine.pathwise_sup(&p.dynamics, &p.barrier, &x, &path).unwrap();
        hits += usize::from(best >= delta);
    }
    let freq = hits as f64 / MC_SAMPLES as f64;
    let bound = (sup.value + CI_MULTIPLIER * sup.half_width_95.unwrap()) / delta;
    (freq <= bound, format!("x={} freq={freq:.5}<=bound={bound:.5}", x.coords()[0]))
}

#[test]
fn criterion_09_markov_consistency() {
    let (ok1, d1) = markov_check(1.0, 99);
    // near the unsafe level the frequency is no longer zero
    let (ok2, d2) = markov_check(19.7, 100);
    let ok = ok1 && ok2;
    report(9, ok, format!("{d1}; {d2}"));
    assert!(ok);
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_reruns_are_byte_identical() {
    let mc = tempfile::tempdir().unwrap();
    let mc_cfg = mc.path().join("interval_mc.toml");
    let text = fs::read_to_string(config("interval_sum.toml"))
        .unwrap()
        .replacen("[verify]", "[verify]\nestimator = \"monte_carlo\"", 1);
    fs::write(&mc_cfg, text).unwrap();

    let runs: Vec<(Vec<&str>, PathBuf)> = vec![
        (vec!["simulate", "--emit-traces"], config("trace.toml")),
        (vec!["simulate"], config("polytopic.toml")),
        (vec!["simulate"], config("interval_sum.toml")),
        (vec!["verify", "--assume-convex"], config("polytopic.toml")),
        (vec!["verify", "--assume-convex"], config("trace.toml")),
        (vec!["verify"], mc_cfg.clone()),
        (vec!["probe"], config("trace.toml")),
        (vec!["threshold"], config("quadratic_lifted.toml")),
    ];
    let mut ok = true;
    let mut compared = 0;
    for (args, cfg) in &runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ca, _) = run_cli(args, cfg, a.path());
        let out = Command::new(bin())
            .args(args)
            .arg("--config")
            .arg(cfg)
            .arg("--out")
            .arg(b.path())
            .env("RAYON_NUM_THREADS", "1")
            .output()
            .unwrap();
        let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
        let same = ca == out.status.code().unwrap_or(-1) && !fa.is_empty() && fa == fb;
        if !same {
            println!("    differs: {args:?} {}", cfg.display());
        }
        ok &= same;
        compared += fa.len();
    }
    report(
        10,
        ok,
        format!("{} commands, {compared} files compared, second run single-threaded", runs.len()),
    );
    assert!(ok);
}
