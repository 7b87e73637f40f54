//! Safety certificates: the finite-horizon sum bound, the concave supremum
//! bound, the supermartingale check and its horizon-free `δ/Δ` bound, and a
//! bisection search for the largest certified initial condition along a ray.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barrier::{candidate_check, concavity_probe, extremum, BarrierSpec, CandidateReport, Extremum, RegionSpec};
use crate::distribution::InputDistribution;
use crate::error::{Error, Result};
use crate::geometry::{box_vertices, clipped_box_vertices};
use crate::lambda::{HorizonMethod, InputPath, LambdaEngine};
use crate::models::{convexity_probe, Dynamics};
use crate::probe::ProbeReport;
use crate::state::{StateShape, StateVector};
use crate::stats::MeanEstimate;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Relative slack on `≤` comparisons so boundary cases certify.
pub const CERT_REL_TOL: f64 = 1e-12;

/// Largest grid accepted by [`CheckPoints::Grid`].
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HorizonRepr", into = "HorizonRepr")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HorizonRepr {
    Steps(usize),
    Word(String),
}

impl TryFrom<HorizonRepr> for Horizon {
    type Error = String;
    fn try_from(r: HorizonRepr) -> std::result::Result<Self, String> {
        match r {
            HorizonRepr::Steps(n) => Ok(Horizon::Finite(n)),
            HorizonRepr::Word(w) if w == "infinite" => Ok(Horizon::Infinite),
            HorizonRepr::Word(w) => Err(format!("horizon must be a step count or \"infinite\", got {w:?}")),
        }
    }
}

impl From<Horizon> for HorizonRepr {
    fn from(h: Horizon) -> Self {
        match h {
            Horizon::Finite(n) => HorizonRepr::Steps(n),
            Horizon::Infinite => HorizonRepr::Word("infinite".into()),
        }
    }
}

/// Everything a certificate is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyProblem {
    pub dynamics: Dynamics,
    pub dist: InputDistribution,
    pub barrier: BarrierSpec,
    pub initial: RegionSpec,
    pub unsafe_set: RegionSpec,
    pub state_domain: RegionSpec,
    pub horizon: Horizon,
    pub rho: f64,
}

impl SafetyProblem {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.base_map().validate()?;
        self.dist.validate()?;
        self.barrier.validate()?;
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::model(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.horizon == Horizon::Finite(0) {
            return Err(Error::model("horizon must be at least 1"));
        }
        let dim = self.dynamics.base_map().state_dim();
        let shape = self.dynamics.state_shape();
        for (name, r) in [
            ("initial", &self.initial),
            ("unsafe", &self.unsafe_set),
            ("state_domain", &self.state_domain),
        ] {
            r.validate()?;
            match r {
                RegionSpec::Box { lo, .. } if lo.len() != dim => {
                    return Err(Error::model(format!(
                        "{name} box has dimension {}, states have {dim}",
                        lo.len()
                    )));
                }
                RegionSpec::TraceInterval { .. } if !matches!(shape, StateShape::SymMatrix { .. }) => {
                    return Err(Error::model(format!("{name} is a trace interval but states are vectors")));
                }
                _ => {}
            }
        }
        if self.regions_intersect()? {
            return Err(Error::model("initial and unsafe sets intersect"));
        }
        Ok(())
    }

    /// Intersection test for the pairs where it is decidable: two boxes, two
    /// trace intervals, or any pair whose image under `B` is an interval
    /// (level sets, and trace intervals under a trace barrier).
    fn regions_intersect(&self) -> Result<bool> {
        use RegionSpec::*;
        match (&self.initial, &self.unsafe_set) {
            (Box { lo: a, hi: b }, Box { lo: c, hi: d }) => {
                Ok(a.iter().zip(b).zip(c.iter().zip(d)).all(|((a, b), (c, d))| a <= d && c <= b))
            }
            (TraceInterval { lo: a, hi: b }, TraceInterval { lo: c, hi: d }) => Ok(a <= d && c <= b),
            (o, u) => {
                let level_like = |r: &RegionSpec| {
                    matches!(r, Sublevel { .. } | Superlevel { .. })
                        || (matches!(r, TraceInterval { .. })
                            && matches!(self.barrier.kind, crate::barrier::BarrierKind::TraceAffine { .. }))
                };
                if !(level_like(o) || level_like(u)) {
                    return Ok(false);
                }
                match (
                    extremum(&self.barrier, o, Extremum::Max),
                    extremum(&self.barrier, u, Extremum::Min),
                ) {
                    (Ok((max_o, _, _)), Ok((min_u, _, _))) => Ok(max_o >= min_u),
                    _ => Ok(false),
                }
            }
        }
    }

    pub fn finite_horizon(&self) -> Result<usize> {
        match self.horizon {
            Horizon::Finite(n) => Ok(n),
            Horizon::Infinite => Err(Error::Precondition("this certificate needs a finite horizon".into())),
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn problem_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("problem serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// `B(x)`, requiring `x ∈ K_Δ`.
    fn check_in_sublevel(&self, x: &StateVector) -> Result<f64> {
        self.dynamics.base_map().check_state(x)?;
        let b = self.barrier.evaluate(x)?;
        if b > self.barrier.unsafe_level {
            return Err(Error::Precondition(format!(
                "initial state has B = {b} > Δ = {}; the bound needs x in the Δ-sublevel set",
                self.barrier.unsafe_level
            )));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    SumBound,
    ConcaveSupBound,
    Supermartingale,
    InfiniteHorizon,
}

/// A state with its supermartingale margin or certificate value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub schema_version: u32,
    pub problem_id: String,
    pub method: CertificateMethod,
    /// Initial state the certificate is about, when it is pointwise.
    pub x0: Option<Vec<f64>>,
    /// `Σℓ_i`, `E[sup λ_k]`, the largest supermartingale margin, or `δ`.
    /// NaN (`null` in JSON) when evaluation was refused.
    #[serde(with = "nan_as_null")]
    pub value: f64,
    /// 95% half-width of `value` for statistical certificates.
    pub half_width_95: Option<f64>,
    /// Probability bound implied by `value`.
    #[serde(with = "nan_as_null")]
    pub bound: f64,
    pub rho_target: f64,
    pub ok: bool,
    /// Issued although a structural assumption failed its probe.
    pub advisory: bool,
    pub statistical: bool,
    pub approximate: bool,
    pub assumptions_checked: Vec<ProbeReport>,
    pub witnesses: Vec<Witness>,
    pub notes: Vec<String>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl CertificateReport {
    fn new(problem: &SafetyProblem, method: CertificateMethod) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            problem_id: problem.problem_id(),
            method,
            x0: None,
            value: f64::NAN,
            half_width_95: None,
            bound: f64::NAN,
            rho_target: problem.rho,
            ok: false,
            advisory: false,
            statistical: false,
            approximate: false,
            assumptions_checked: Vec::new(),
            witnesses: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// One-line human-readable summary.
    pub fn summary(&self) -> String {
        let mut flags = Vec::new();
        if self.advisory {
            flags.push("advisory");
        }
        if self.statistical {
            flags.push("statistical");
        }
        if self.approximate {
            flags.push("approximate");
        }
        format!(
            "{:<18} {} value={} bound={} rho={}{}",
            format!("{:?}", self.method),
            if self.ok { "OK  " } else { "FAIL" },
            self.value,
            self.bound,
            self.rho_target,
            if flags.is_empty() {
                String::new()
            } else {
                format!(" [{}]", flags.join(", "))
            }
        )
    }
}

fn leq(a: f64, b: f64) -> bool {
    a <= b + CERT_REL_TOL * b.abs().max(1.0)
}

/// How `ℓ_k` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum Estimator {
    /// Closed-form expectations (sum bound) or mean substitution under a
    /// monotonicity certificate (supremum bound).
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Knobs shared by the certificate routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub engine: LambdaEngine,
    pub probe_trials: usize,
    pub probe_seed: u64,
    /// Proceed past failed structural probes, stamping the result advisory.
    pub assume_convex: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            engine: LambdaEngine::default(),
            probe_trials: 512,
            probe_seed: 0,
            assume_convex: false,
        }
    }
}

/// Convexity of the map graph and concavity of the barrier, both over the state domain.
pub fn structural_probes(problem: &SafetyProblem, trials: usize, seed: u64) -> Result<Vec<ProbeReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convex = convexity_probe(&problem.dynamics, &problem.dist, &problem.state_domain, trials, &mut rng)?;
    let concave = concavity_probe(
        &problem.barrier,
        &problem.state_domain,
        problem.dynamics.state_shape(),
        trials,
        &mut rng,
    )?;
    Ok(vec![convex, concave])
}

const UNVERIFIED: &str = "structural assumption unverified: a convexity or concavity probe failed";

/// Runs the probes into `report`. Returns whether evaluation may continue.
fn gate_on_probes(problem: &SafetyProblem, opts: &VerifyOptions, report: &mut CertificateReport) -> Result<bool> {
    let probes = structural_probes(problem, opts.probe_trials, opts.probe_seed)?;
    let passed = probes.iter().all(|p| p.passed);
    report.assumptions_checked = probes;
    if passed {
        return Ok(true);
    }
    report.advisory = true;
    report.notes.push(UNVERIFIED.into());
    if opts.assume_convex {
        report.notes.push("continuing under the assume-convex override".into());
        Ok(true)
    } else {
        report.notes.push("refusing to certify; rerun with the assume-convex override to evaluate anyway".into());
        Ok(false)
    }
}

/// `Σ_{i=1}^N ℓ_i(x) ≤ ρΔ`.
///
/// Bounds the probability of reaching `{B ≥ Δ}` within `N` steps from `x`.
/// Monte Carlo estimates decide on the upper edge of the 95% interval.
pub fn sum_bound(
    problem: &SafetyProblem,
    x: &StateVector,
    estimator: Estimator,
    engine: &LambdaEngine,
) -> Result<CertificateReport> {
    let n = problem.finite_horizon()?;
    problem.check_in_sublevel(x)?;
    let (dyn_, b, dist) = (&problem.dynamics, &problem.barrier, &problem.dist);
    let delta = b.unsafe_level;
    let mut report = CertificateReport::new(problem, CertificateMethod::SumBound);
    report.x0 = Some(x.coords().to_vec());
    let decide = match estimator {
        Estimator::ClosedForm => {
            let mut total = 0.0;
            for i in 1..=n {
                total += engine.ell_exact(dyn_, b, dist, x, i)?;
            }
            report.value = total;
            total
        }
        Estimator::MonteCarlo { samples, seed } => {
            let est = mc_mean(samples, seed, |rng| {
                let path = InputPath::sample(dyn_, dist, n, rng);
                engine.pathwise_sum(dyn_, b, x, &path)
            })?;
            report.value = est.mean;
            report.half_width_95 = Some(est.half_width_95);
            report.statistical = true;
            est.upper_95()
        }
    };
    report.bound = report.value / delta;
    report.ok = leq(decide, problem.rho * delta);
    Ok(report)
}

fn mc_mean(
    samples: usize,
    seed: u64,
    mut f: impl FnMut(&mut ChaCha8Rng) -> Result<f64>,
) -> Result<MeanEstimate> {
    if samples < 100 {
        return Err(Error::Precondition("Monte Carlo estimates need at least 100 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = MeanEstimate::accumulator();
    for _ in 0..samples {
        acc.push(f(&mut rng)?);
    }
    Ok(acc.finish())
}

/// `E[sup_{1≤k≤N} λ_k(x)] ≤ ρΔ`, gated on the structural probes.
///
/// `ClosedForm` substitutes input means, which needs a.s. nonnegative
/// increments so that the supremum sits at `k = N`.
pub fn concave_sup_bound(
    problem: &SafetyProblem,
    x: &StateVector,
    estimator: Estimator,
    opts: &VerifyOptions,
) -> Result<CertificateReport> {
    let n = problem.finite_horizon()?;
    problem.check_in_sublevel(x)?;
    let mut report = CertificateReport::new(problem, CertificateMethod::ConcaveSupBound);
    report.x0 = Some(x.coords().to_vec());
    if !gate_on_probes(problem, opts, &mut report)? {
        return Ok(report);
    }
    let value = concave_sup_value(problem, x, n, estimator, &opts.engine)?;
    let delta = problem.barrier.unsafe_level;
    report.value = value.mean;
    report.bound = value.mean / delta;
    report.statistical = value.n > 0;
    report.half_width_95 = report.statistical.then_some(value.half_width_95);
    report.ok = leq(value.upper_95(), problem.rho * delta);
    Ok(report)
}

fn concave_sup_value(
    problem: &SafetyProblem,
    x: &StateVector,
    n: usize,
    estimator: Estimator,
    engine: &LambdaEngine,
) -> Result<MeanEstimate> {
    let (dyn_, b, dist) = (&problem.dynamics, &problem.barrier, &problem.dist);
    match estimator {
        Estimator::ClosedForm => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let s = engine.sup_over_horizon(dyn_, b, dist, x, n, HorizonMethod::Analytic, &mut rng)?;
            Ok(MeanEstimate::exact(s.value))
        }
        Estimator::MonteCarlo { samples, seed } => {
            if samples < 100 {
                return Err(Error::Precondition("Monte Carlo estimates need at least 100 samples".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = engine.sup_over_horizon(dyn_, b, dist, x, n, HorizonMethod::MonteCarlo { samples }, &mut rng)?;
            Ok(MeanEstimate {
                mean: s.value,
                half_width_95: s.half_width_95.unwrap_or(0.0),
                n: samples,
            })
        }
    }
}

/// Where the supermartingale condition is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckPoints {
    /// Vertices of the domain box clipped to `B ≤ level` when the unsafe set
    /// is a superlevel set. For trace-interval domains, scaled identities at
    /// the trace endpoints. Exact whenever the margin is convex on the
    /// region, which holds for affine barriers under every shipped map.
    BoxVertices,
    /// Regular grid over a box domain with the given pitch.
    Grid { pitch: f64 },
    ExplicitList { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    /// `(x, λ₁(x, E[v]) - B(x))` per check point.
    pub margins: Vec<Witness>,
    pub max_margin: f64,
    pub passed: bool,
    pub approximate: bool,
    /// Worst point when the condition fails.
    pub witness: Option<Witness>,
    pub notes: Vec<String>,
}

/// Checks `sup_{x⁺ ∈ G(x, E[v])} B(x⁺) ≤ B(x)` on the state domain outside the unsafe set.
pub fn supermartingale_check(
    problem: &SafetyProblem,
    check_points: &CheckPoints,
    engine: &LambdaEngine,
) -> Result<SupermartingaleReport> {
    let shape = problem.dynamics.state_shape();
    let clip_level = match problem.unsafe_set {
        RegionSpec::Superlevel { level } => Some(level),
        _ => None,
    };
    let mut notes = Vec::new();
    let (points, approximate) = match (check_points, &problem.state_domain) {
        (CheckPoints::BoxVertices, RegionSpec::Box { lo, hi }) => {
            let pts = match clip_level {
                Some(level) => {
                    let (g, g0) = problem.barrier.affine_functional(lo.len())?;
                    clipped_box_vertices(lo, hi, &g, g0, level)
                }
                None => {
                    notes.push("unsafe set is not a superlevel set of B; checking the whole domain box".into());
                    box_vertices(lo, hi)
                }
            };
            let exact = matches!(problem.barrier.kind, crate::barrier::BarrierKind::Affine { .. });
            (pts.into_iter().map(|c| StateVector::from_parts(c, shape)).collect::<Result<Vec<_>>>()?, !exact)
        }
        (CheckPoints::BoxVertices, RegionSpec::TraceInterval { lo, hi }) => {
            let StateShape::SymMatrix { n } = shape else {
                return Err(Error::UnsupportedRegion("trace interval needs matrix states".into()));
            };
            let offset = match problem.barrier.kind {
                crate::barrier::BarrierKind::TraceAffine { offset } => Some(offset),
                _ => None,
            };
            let top = match (clip_level, offset) {
                (Some(level), Some(off)) => hi.min(level - off),
                _ => *hi,
            };
            let exact = offset.is_some()
                && matches!(
                    problem.dynamics.base_map(),
                    crate::models::MapSpec::UnitaryConjugation { .. }
                );
            if !exact {
                notes.push("endpoint matrices are only a sample of the trace interval".into());
            }
            let pts = [*lo, top]
                .iter()
                .map(|&t| {
                    StateVector::from_matrix(&nalgebra::DMatrix::from_diagonal_element(n, n, t / n as f64))
                })
                .collect::<Result<Vec<_>>>()?;
            (pts, !exact)
        }
        (CheckPoints::BoxVertices, other) => {
            return Err(Error::UnsupportedRegion(format!(
                "vertex check points need a box or trace-interval domain, got {other:?}"
            )));
        }
        (CheckPoints::Grid { pitch }, RegionSpec::Box { lo, hi }) => {
            (grid_points(lo, hi, *pitch)?.into_iter().map(|c| StateVector::from_parts(c, shape)).collect::<Result<Vec<_>>>()?, true)
        }
        (CheckPoints::Grid { .. }, other) => {
            return Err(Error::UnsupportedRegion(format!("grid check points need a box domain, got {other:?}")));
        }
        (CheckPoints::ExplicitList { points }, _) => (
            points
                .iter()
                .map(|c| StateVector::from_parts(c.clone(), shape))
                .collect::<Result<Vec<_>>>()?,
            true,
        ),
    };

    let mean_path = InputPath::repeated(&problem.dynamics.mean_input(&problem.dist), 1);
    let mut margins = Vec::with_capacity(points.len());
    for x in &points {
        let in_unsafe = problem.unsafe_set.contains(x, &problem.barrier)?;
        // closed clipping keeps the boundary; only strictly unsafe grid points are dropped
        if in_unsafe && approximate {
            continue;
        }
        let next = engine.closed_form(&problem.dynamics, &problem.barrier, x, &mean_path)?;
        margins.push(Witness {
            state: x.coords().to_vec(),
            value: next - problem.barrier.value(x)?,
        });
    }
    if margins.is_empty() {
        return Err(Error::Precondition("no check points outside the unsafe set".into()));
    }
    let worst = margins
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .cloned()
        .expect("nonempty");
    let tol = CERT_REL_TOL * problem.barrier.unsafe_level.abs().max(1.0);
    let passed = worst.value <= tol;
    if approximate {
        notes.push("check points do not cover the region exactly".into());
    }
    Ok(SupermartingaleReport {
        max_margin: worst.value,
        passed,
        approximate,
        witness: (!passed).then_some(worst),
        margins,
        notes,
    })
}

fn grid_points(lo: &[f64], hi: &[f64], pitch: f64) -> Result<Vec<Vec<f64>>> {
    if !(pitch > 0.0) {
        return Err(Error::Precondition("grid pitch must be positive".into()));
    }
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| {
            let steps = ((b - a) / pitch).floor() as usize;
            let mut v: Vec<f64> = (0..=steps).map(|i| a + i as f64 * pitch).collect();
            if *v.last().unwrap() < *b {
                v.push(*b);
            }
            v
        })
        .collect();
    let total = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
    match total {
        Some(t) if t <= MAX_GRID_POINTS => {}
        _ => return Err(Error::Precondition(format!("grid exceeds {MAX_GRID_POINTS} points"))),
    }
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

/// Certificate wrapper around [`supermartingale_check`], with probes.
pub fn supermartingale_certificate(
    problem: &SafetyProblem,
    check_points: &CheckPoints,
    opts: &VerifyOptions,
) -> Result<(CertificateReport, SupermartingaleReport)> {
    let mut report = CertificateReport::new(problem, CertificateMethod::Supermartingale);
    let proceed = gate_on_probes(problem, opts, &mut report)?;
    let sm = supermartingale_check(problem, check_points, &opts.engine)?;
    report.value = sm.max_margin;
    report.bound = problem.barrier.initial_level / problem.barrier.unsafe_level;
    report.approximate = sm.approximate;
    report.witnesses = sm.witness.iter().cloned().collect();
    report.notes.extend(sm.notes.iter().cloned());
    report.ok = proceed && sm.passed && leq(report.bound, problem.rho);
    Ok((report, sm))
}

/// Horizon-free bound `δ/Δ` from a supermartingale barrier.
///
/// Requires the candidate check, the supermartingale check and the structural
/// probes; refuses otherwise unless the assume-convex override is set, in
/// which case failed probes make the result advisory.
pub fn infinite_horizon_bound(
    problem: &SafetyProblem,
    check_points: &CheckPoints,
    opts: &VerifyOptions,
) -> Result<CertificateReport> {
    let (sm_report, sm) = supermartingale_certificate(problem, check_points, opts)?;
    let candidate: CandidateReport = candidate_check(&problem.barrier, &problem.initial, &problem.unsafe_set)?;
    let mut report = CertificateReport::new(problem, CertificateMethod::InfiniteHorizon);
    report.assumptions_checked = sm_report.assumptions_checked;
    report.advisory = sm_report.advisory;
    report.approximate = sm.approximate;
    report.notes = sm_report.notes;
    report.witnesses = sm.margins.clone();
    report.value = problem.barrier.initial_level;
    report.bound = problem.barrier.initial_level / problem.barrier.unsafe_level;
    let probes_ok = !report.advisory || opts.assume_convex;
    if !candidate.ok {
        report.notes.push(format!(
            "candidate check failed: max B on initial set {} (δ = {}), min B on unsafe set {} (Δ = {})",
            candidate.max_on_initial, problem.barrier.initial_level, candidate.min_on_unsafe, problem.barrier.unsafe_level
        ));
    }
    if !sm.passed {
        report.notes.push(format!("supermartingale condition fails, worst margin {}", sm.max_margin));
    }
    report.ok = candidate.ok && sm.passed && probes_ok && leq(report.bound, problem.rho);
    Ok(report)
}

/// Parametrized initial states `origin + t·direction`, `t ∈ [lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Ray {
    pub fn scalar(lo: f64, hi: f64) -> Self {
        Self {
            origin: vec![0.0],
            direction: vec![1.0],
            lo,
            hi,
        }
    }

    fn at(&self, t: f64, shape: StateShape) -> Result<StateVector> {
        let c = self.origin.iter().zip(&self.direction).map(|(o, d)| o + t * d).collect();
        StateVector::from_parts(c, shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    SumBound,
    ConcaveSupBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub schema_version: u32,
    pub problem_id: String,
    pub method: ThresholdMethod,
    /// Largest ray parameter found to certify.
    pub threshold: f64,
    pub state: Vec<f64>,
    pub tol: f64,
    pub evaluations: usize,
    pub advisory: bool,
    pub statistical: bool,
}

/// Points sampled along the ray before bisecting.
pub const MONOTONICITY_SAMPLES: usize = 17;

/// Largest `t` on the ray whose certificate is ok, to within `tol`.
///
/// The certificate value must be nondecreasing in `t`; this is checked on
/// evenly spaced samples first.
pub fn threshold_search(
    problem: &SafetyProblem,
    ray: &Ray,
    method: ThresholdMethod,
    estimator: Estimator,
    tol: f64,
    opts: &VerifyOptions,
) -> Result<ThresholdResult> {
    let n = problem.finite_horizon()?;
    let dim = problem.dynamics.base_map().state_dim();
    if ray.origin.len() != dim || ray.direction.len() != dim {
        return Err(Error::model("ray dimension does not match the state"));
    }
    if !(ray.lo < ray.hi) || !(tol > 0.0) {
        return Err(Error::Precondition("ray needs lo < hi and a positive tolerance".into()));
    }
    let shape = problem.dynamics.state_shape();
    let delta = problem.barrier.unsafe_level;
    let mut advisory = false;
    if method == ThresholdMethod::ConcaveSupBound {
        let probes = structural_probes(problem, opts.probe_trials, opts.probe_seed)?;
        if probes.iter().any(|p| !p.passed) {
            if !opts.assume_convex {
                return Err(Error::Precondition(UNVERIFIED.into()));
            }
            advisory = true;
        }
    }
    let mut evaluations = 0usize;
    // certificate value (upper edge for MC) at t; states outside K_Δ map to +∞
    let mut value = |t: f64| -> Result<f64> {
        evaluations += 1;
        let x = ray.at(t, shape)?;
        if problem.barrier.evaluate(&x)? > delta {
            return Ok(f64::INFINITY);
        }
        match method {
            ThresholdMethod::SumBound => sum_bound(problem, &x, estimator, &opts.engine).map(|r| {
                r.value + r.half_width_95.unwrap_or(0.0)
            }),
            ThresholdMethod::ConcaveSupBound => {
                concave_sup_value(problem, &x, n, estimator, &opts.engine).map(|e| e.upper_95())
            }
        }
    };
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..MONOTONICITY_SAMPLES {
        let t = ray.lo + (ray.hi - ray.lo) * i as f64 / (MONOTONICITY_SAMPLES - 1) as f64;
        let f = value(t)?;
        if let Some((t0, f0)) = prev {
            if f < f0 - CERT_REL_TOL * f0.abs().max(1.0) {
                return Err(Error::NonMonotone { t1: t0, f1: f0, t2: t, f2: f });
            }
        }
        prev = Some((t, f));
    }
    let target = problem.rho * delta;
    let (mut lo, mut hi) = (ray.lo, ray.hi);
    if !leq(value(lo)?, target) {
        return Err(Error::Precondition(format!("no point of the ray certifies; t = {lo} already fails")));
    }
    if leq(value(hi)?, target) {
        lo = hi;
    } else {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if leq(value(mid)?, target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(ThresholdResult {
        schema_version: REPORT_SCHEMA_VERSION,
        problem_id: problem.problem_id(),
        method,
        threshold: lo,
        state: ray.at(lo, shape)?.coords().to_vec(),
        tol,
        evaluations,
        advisory,
        statistical: matches!(estimator, Estimator::MonteCarlo { .. }),
    })
}
