use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use sdibarrier::config::RunConfig;
use sdibarrier::simulator::{write_batch_csv, write_traces_csv};
use sdibarrier::verifier::structural_probes;
use sdibarrier::{
    candidate_check, compare_to_certificate, concave_sup_bound, infinite_horizon_bound, run_batch, sum_bound,
    supermartingale_certificate, threshold_search, CertificateMethod, CertificateReport, Error, Horizon,
    SafetyProblem, StateVector, ThresholdResult, TrajectoryBatch, VerifyOptions,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "sdibarrier", version, about = "Barrier-certificate safety toolkit for stochastic difference inclusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Continue past failed structural probes; results are stamped advisory.
    #[arg(long, global = true)]
    assume_convex: bool,

    /// Also write full state traces when simulating.
    #[arg(long, global = true)]
    emit_traces: bool,

    /// Print the configuration after applying flags, then exit.
    #[arg(long, global = true)]
    dump_effective_config: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Compute the configured certificates.
    Verify,
    /// Run a trajectory batch.
    Simulate,
    /// Search for the largest certified initial condition along a ray.
    Threshold,
    /// Run the structural probes and the candidate check.
    Probe,
    /// Summarize report files already in the output directory.
    Report,
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn config_error(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        err: err.into(),
    }
}

fn runtime_error(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        err: err.into(),
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Command::Report = cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        return cmd_report(&out);
    }
    let path = cli.config.as_ref().ok_or_else(|| config_error(anyhow!("--config is required")))?;
    let mut cfg = RunConfig::from_path(path).map_err(config_error)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(n) = cli.samples {
        cfg.run.samples = Some(n);
    }
    if cli.assume_convex {
        cfg.run.assume_convex = true;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = Some(out.display().to_string());
    }
    if cli.dump_effective_config {
        print!("{}", cfg.to_toml_string().map_err(config_error)?);
        return Ok(true);
    }
    let problem = cfg.problem().map_err(config_error)?;
    let out = PathBuf::from(cfg.run.out.clone().unwrap_or_else(|| "out".into()));
    match cli.command {
        Command::Verify => cmd_verify(&cfg, &problem, &out),
        Command::Simulate => cmd_simulate(&cfg, &problem, &out, cli.emit_traces),
        Command::Threshold => cmd_threshold(&cfg, &problem, &out),
        Command::Probe => cmd_probe(&cfg, &problem, &out),
        Command::Report => unreachable!("handled above"),
    }
}

fn options(cfg: &RunConfig) -> Result<VerifyOptions, Failure> {
    Ok(VerifyOptions {
        probe_trials: cfg.run.probe_trials.unwrap_or(VerifyOptions::default().probe_trials),
        probe_seed: cfg.seed().map_err(config_error)?,
        assume_convex: cfg.run.assume_convex,
        ..VerifyOptions::default()
    })
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime_error)?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(runtime_error)?;
    tmp.write_all(bytes).map_err(runtime_error)?;
    tmp.persist(&target).map_err(|e| runtime_error(e.error))?;
    Ok(target)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime_error)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn cmd_verify(cfg: &RunConfig, problem: &SafetyProblem, out: &Path) -> Outcome {
    let vc = cfg
        .verify
        .as_ref()
        .ok_or_else(|| config_error(anyhow!("missing [verify] block")))?;
    if vc.certificates.is_empty() {
        return Err(config_error(anyhow!("[verify] certificates is empty")));
    }
    let mut methods = vc.certificates.clone();
    methods.sort_by_key(|m| *m as u8);
    methods.dedup();
    let needs_x0 = methods
        .iter()
        .any(|m| matches!(m, CertificateMethod::SumBound | CertificateMethod::ConcaveSupBound));
    let x0 = match (&vc.x0, needs_x0) {
        (Some(c), _) => Some(
            StateVector::from_parts(c.clone(), problem.dynamics.state_shape()).map_err(config_error)?,
        ),
        (None, true) => return Err(config_error(anyhow!("[verify] x0 is required for pointwise certificates"))),
        (None, false) => None,
    };
    let estimator = cfg.estimator(vc.estimator).map_err(config_error)?;
    let needs_probes = methods.iter().any(|m| *m != CertificateMethod::SumBound);
    let opts = if needs_probes {
        options(cfg)?
    } else {
        VerifyOptions::default()
    };

    let mut reports: Vec<CertificateReport> = Vec::new();
    for m in methods {
        let report = match m {
            CertificateMethod::SumBound => sum_bound(problem, x0.as_ref().expect("checked"), estimator, &opts.engine),
            CertificateMethod::ConcaveSupBound => {
                concave_sup_bound(problem, x0.as_ref().expect("checked"), estimator, &opts)
            }
            CertificateMethod::Supermartingale => {
                supermartingale_certificate(problem, &vc.check_points, &opts).map(|(r, _)| r)
            }
            CertificateMethod::InfiniteHorizon => infinite_horizon_bound(problem, &vc.check_points, &opts),
        }
        .map_err(runtime_error)?;
        println!("{}", report.summary());
        for note in &report.notes {
            println!("    note: {note}");
        }
        reports.push(report);
    }
    write_json(out, "certificates.json", &reports)?;
    let text: String = reports.iter().map(|r| r.summary() + "\n").collect();
    write_atomic(out, "certificates.txt", text.as_bytes())?;
    Ok(reports.iter().all(|r| r.ok))
}

fn cmd_simulate(cfg: &RunConfig, problem: &SafetyProblem, out: &Path, emit_traces: bool) -> Outcome {
    let sc = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| config_error(anyhow!("missing [simulate] block")))?;
    if sc.n_traj == 0 {
        return Err(config_error(anyhow!("[simulate] n_traj must be at least 1")));
    }
    let seed = cfg.seed().map_err(config_error)?;
    let horizon = match (sc.horizon, problem.horizon) {
        (Some(n), _) | (None, Horizon::Finite(n)) => n,
        (None, Horizon::Infinite) => {
            return Err(config_error(anyhow!("[simulate] horizon is required when the problem horizon is infinite")))
        }
    };
    let sampler = sc.sampler.clone().unwrap_or_else(|| problem.initial.clone());
    let (batch, traces) =
        run_batch(problem, &sampler, sc.n_traj, horizon, &sc.policy, seed, emit_traces).map_err(runtime_error)?;
    let mut csv_bytes = Vec::new();
    write_batch_csv(&batch, &mut csv_bytes).map_err(runtime_error)?;
    write_atomic(out, "batch.csv", &csv_bytes)?;
    write_json(out, "batch.json", &batch)?;
    if let Some(traces) = traces {
        let mut bytes = Vec::new();
        write_traces_csv(problem, &traces, &mut bytes).map_err(runtime_error)?;
        write_atomic(out, "traces.csv", &bytes)?;
    }
    println!(
        "{} trajectories, {} hits, {} domain exits, frequency {} (95% Wilson [{}, {}])",
        batch.n_traj,
        batch.hits,
        batch.domain_exits,
        batch.empirical_hit_frequency,
        batch.wilson_ci_95.0,
        batch.wilson_ci_95.1
    );
    Ok(true)
}

fn cmd_threshold(cfg: &RunConfig, problem: &SafetyProblem, out: &Path) -> Outcome {
    let tc = cfg
        .threshold
        .as_ref()
        .ok_or_else(|| config_error(anyhow!("missing [threshold] block")))?;
    let estimator = cfg.estimator(tc.estimator).map_err(config_error)?;
    let opts = match tc.method {
        sdibarrier::ThresholdMethod::SumBound => VerifyOptions::default(),
        sdibarrier::ThresholdMethod::ConcaveSupBound => options(cfg)?,
    };
    let result = threshold_search(problem, &tc.ray, tc.method, estimator, tc.tol, &opts).map_err(|e| match e {
        Error::Config(_) => config_error(e),
        other => runtime_error(other),
    })?;
    println!("threshold {} (tol {})", result.threshold, result.tol);
    write_json(out, "threshold.json", &result)?;
    Ok(true)
}

#[derive(Serialize)]
struct ProbeOutput {
    schema_version: u32,
    problem_id: String,
    candidate: Option<sdibarrier::CandidateReport>,
    candidate_error: Option<String>,
    probes: Vec<sdibarrier::ProbeReport>,
}

fn cmd_probe(cfg: &RunConfig, problem: &SafetyProblem, out: &Path) -> Outcome {
    let opts = options(cfg)?;
    let probes = structural_probes(problem, opts.probe_trials, opts.probe_seed).map_err(runtime_error)?;
    let (candidate, candidate_error) =
        match candidate_check(&problem.barrier, &problem.initial, &problem.unsafe_set) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
    for p in &probes {
        println!(
            "{:<22} {} trials={} violations={} worst={}",
            p.name,
            if p.passed { "passed" } else { "VIOLATED" },
            p.trials,
            p.violations,
            p.worst_violation
        );
    }
    match (&candidate, &candidate_error) {
        (Some(c), _) => println!(
            "{:<22} {} max_on_initial={} min_on_unsafe={}",
            "barrier_candidate",
            if c.ok { "passed" } else { "VIOLATED" },
            c.max_on_initial,
            c.min_on_unsafe
        ),
        (None, Some(e)) => println!("{:<22} unavailable: {e}", "barrier_candidate"),
        _ => {}
    }
    write_json(
        out,
        "probes.json",
        &ProbeOutput {
            schema_version: sdibarrier::verifier::REPORT_SCHEMA_VERSION,
            problem_id: problem.problem_id(),
            candidate,
            candidate_error,
            probes,
        },
    )?;
    Ok(true)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, Failure> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(runtime_error)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map(Some)
        .map_err(runtime_error)
}

fn cmd_report(out: &Path) -> Outcome {
    let certs: Option<Vec<CertificateReport>> = read_json(&out.join("certificates.json"))?;
    let threshold: Option<ThresholdResult> = read_json(&out.join("threshold.json"))?;
    let batch: Option<TrajectoryBatch> = read_json(&out.join("batch.json"))?;
    if certs.is_none() && threshold.is_none() && batch.is_none() {
        return Err(runtime_error(anyhow!("no reports found in {}", out.display())));
    }
    let mut text = String::new();
    let mut all_ok = true;
    if let Some(certs) = &certs {
        text.push_str("certificates\n");
        for c in certs {
            all_ok &= c.ok;
            text.push_str(&format!("  {}\n", c.summary()));
        }
    }
    if let Some(t) = &threshold {
        text.push_str(&format!(
            "threshold\n  {:?}: t = {} (tol {}){}\n",
            t.method,
            t.threshold,
            t.tol,
            if t.advisory { " [advisory]" } else { "" }
        ));
    }
    if let Some(b) = &batch {
        text.push_str(&format!(
            "simulation\n  policy {} n={} N={} seed={}: {} hits, {} domain exits, frequency {} (95% Wilson [{}, {}])\n",
            b.policy.name(),
            b.n_traj,
            b.horizon,
            b.seed,
            b.hits,
            b.domain_exits,
            b.empirical_hit_frequency,
            b.wilson_ci_95.0,
            b.wilson_ci_95.1
        ));
        for c in certs.iter().flatten() {
            if let Ok(v) = compare_to_certificate(b, c) {
                text.push_str(&format!("  vs {:?} bound {}: {:?}\n", c.method, c.bound, v));
            }
        }
    }
    print!("{text}");
    write_atomic(out, "report.txt", text.as_bytes())?;
    Ok(all_ok)
}
