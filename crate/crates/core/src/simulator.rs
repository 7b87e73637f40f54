//! Adversarial Monte Carlo trajectories and batch statistics.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::RegionSpec;
use crate::error::{Error, Result};
use crate::models::AdversaryPolicy;
use crate::state::StateVector;
use crate::stats::{wilson_interval, Z95};
use crate::verifier::{CertificateReport, SafetyProblem, REPORT_SCHEMA_VERSION};

/// One simulated run. `states[0]` is the initial state; `inputs[i]` drives
/// the step from `states[i]` to `states[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub inputs: Vec<f64>,
    /// First step (1-based) at which the state entered the unsafe set.
    pub hit_step: Option<usize>,
    /// Step at which the state left the declared domain, ending the run.
    pub domain_exit: Option<usize>,
}

/// Simulates up to `horizon` steps from `x0`, stopping at the first hit or
/// domain exit.
pub fn run_trajectory<R: Rng + ?Sized>(
    problem: &SafetyProblem,
    x0: &StateVector,
    horizon: usize,
    policy: &AdversaryPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    let (map, barrier) = (problem.dynamics.base_map(), &problem.barrier);
    map.check_state(x0)?;
    if matches!(map, crate::models::MapSpec::UnitaryConjugation { .. }) && !x0.is_positive_definite()? {
        return Err(Error::Precondition("matrix initial state must be positive definite".into()));
    }
    if !problem.initial.contains(x0, barrier)? {
        return Err(Error::Precondition(format!(
            "initial state {:?} is outside the initial set",
            x0.coords()
        )));
    }
    let mut traj = Trajectory {
        states: vec![x0.clone()],
        inputs: Vec::with_capacity(horizon),
        hit_step: None,
        domain_exit: None,
    };
    for step in 1..=horizon {
        let v = problem.dist.sample(rng);
        let x = traj.states.last().expect("nonempty");
        let next = map.sample_successor(x, v, policy, Some(barrier), rng)?;
        traj.inputs.push(v);
        let hit = problem.unsafe_set.contains(&next, barrier)?;
        let inside = problem.state_domain.contains(&next, barrier)?;
        traj.states.push(next);
        if hit {
            traj.hit_step = Some(step);
            break;
        }
        if !inside {
            traj.domain_exit = Some(step);
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: usize,
    pub x0: Vec<f64>,
    pub hit_step: Option<usize>,
    pub domain_exit: Option<usize>,
    /// `B` at the last simulated state.
    pub final_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub schema_version: u32,
    pub problem_id: String,
    pub n_traj: usize,
    pub horizon: usize,
    pub policy: AdversaryPolicy,
    pub seed: u64,
    pub records: Vec<TrajectoryRecord>,
    pub hits: usize,
    pub domain_exits: usize,
    /// `hits / n_traj`; domain exits count as non-hits but are reported.
    pub empirical_hit_frequency: f64,
    pub wilson_ci_95: (f64, f64),
}

impl TrajectoryBatch {
    pub fn wilson_half_width(&self) -> f64 {
        0.5 * (self.wilson_ci_95.1 - self.wilson_ci_95.0)
    }
}

/// `n_traj` trajectories with initial states drawn from `sampler`.
///
/// Trajectory `i` uses its own ChaCha8 stream `i` under `seed`, so results do
/// not depend on thread scheduling. Returns the full traces too when asked.
pub fn run_batch(
    problem: &SafetyProblem,
    sampler: &RegionSpec,
    n_traj: usize,
    horizon: usize,
    policy: &AdversaryPolicy,
    seed: u64,
    keep_traces: bool,
) -> Result<(TrajectoryBatch, Option<Vec<Trajectory>>)> {
    if n_traj == 0 {
        return Err(Error::Precondition("a batch needs at least one trajectory".into()));
    }
    let shape = problem.dynamics.state_shape();
    let runs: Vec<Result<(TrajectoryRecord, Option<Trajectory>)>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x0 = sampler.sample(shape, &mut rng)?;
            let traj = run_trajectory(problem, &x0, horizon, policy, &mut rng)?;
            let record = TrajectoryRecord {
                id: i,
                x0: x0.coords().to_vec(),
                hit_step: traj.hit_step,
                domain_exit: traj.domain_exit,
                final_b: problem.barrier.value(traj.states.last().expect("nonempty"))?,
            };
            Ok((record, keep_traces.then_some(traj)))
        })
        .collect();
    let mut records = Vec::with_capacity(n_traj);
    let mut traces = keep_traces.then(Vec::new);
    for r in runs {
        let (rec, tr) = r?;
        records.push(rec);
        if let (Some(all), Some(t)) = (traces.as_mut(), tr) {
            all.push(t);
        }
    }
    let hits = records.iter().filter(|r| r.hit_step.is_some()).count();
    let domain_exits = records.iter().filter(|r| r.domain_exit.is_some()).count();
    Ok((
        TrajectoryBatch {
            schema_version: REPORT_SCHEMA_VERSION,
            problem_id: problem.problem_id(),
            n_traj,
            horizon,
            policy: policy.clone(),
            seed,
            records,
            hits,
            domain_exits,
            empirical_hit_frequency: hits as f64 / n_traj as f64,
            wilson_ci_95: wilson_interval(hits, n_traj, Z95),
        },
        traces,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violation,
}

/// `Consistent` iff the Wilson lower edge does not exceed the certified bound.
pub fn compare_to_certificate(batch: &TrajectoryBatch, report: &CertificateReport) -> Result<Verdict> {
    if batch.problem_id != report.problem_id {
        return Err(Error::ProblemMismatch {
            left: batch.problem_id.clone(),
            right: report.problem_id.clone(),
        });
    }
    Ok(if batch.wilson_ci_95.0 <= report.bound {
        Verdict::Consistent
    } else {
        Verdict::Violation
    })
}

fn opt(v: Option<usize>) -> String {
    v.map(|s| s.to_string()).unwrap_or_default()
}

/// One row per trajectory, then a `summary` row of `key=value` fields.
pub fn write_batch_csv<W: Write>(batch: &TrajectoryBatch, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let dim = batch.records.first().map_or(0, |r| r.x0.len());
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|i| format!("x0_{i}")));
    header.extend(["hit_step", "domain_exit", "final_b"].map(String::from));
    w.write_record(&header)?;
    for r in &batch.records {
        let mut row = vec![r.id.to_string()];
        row.extend(r.x0.iter().map(|v| v.to_string()));
        row.push(opt(r.hit_step));
        row.push(opt(r.domain_exit));
        row.push(r.final_b.to_string());
        w.write_record(&row)?;
    }
    w.write_record([
        "summary".to_string(),
        format!("n_traj={}", batch.n_traj),
        format!("horizon={}", batch.horizon),
        format!("policy={}", batch.policy.name()),
        format!("seed={}", batch.seed),
        format!("hits={}", batch.hits),
        format!("domain_exits={}", batch.domain_exits),
        format!("frequency={}", batch.empirical_hit_frequency),
        format!("wilson_lo={}", batch.wilson_ci_95.0),
        format!("wilson_hi={}", batch.wilson_ci_95.1),
    ])?;
    w.flush()?;
    Ok(())
}

/// Long format: one row per `(trajectory, step)` with the input that led
/// there, the packed state and its barrier value.
pub fn write_traces_csv<W: Write>(problem: &SafetyProblem, traces: &[Trajectory], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = traces.first().map_or(0, |t| t.states[0].dim());
    let mut header = vec!["id".to_string(), "step".into(), "v".into()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    header.push("b".into());
    w.write_record(&header)?;
    for (id, t) in traces.iter().enumerate() {
        for (step, x) in t.states.iter().enumerate() {
            let mut row = vec![id.to_string(), step.to_string()];
            row.push(if step == 0 { String::new() } else { t.inputs[step - 1].to_string() });
            row.extend(x.coords().iter().map(|c| c.to_string()));
            row.push(problem.barrier.value(x)?.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
