//! The λ-recursions: `λ_0 = B` (or an indicator), and
//! `λ_{k+1}(x, v_0, ..., v_k) = sup_{x₁ ∈ G(x, v_0)} λ_k(x₁, v_1, ..., v_k)`.
//!
//! Three evaluators are provided:
//!
//! * an exact tree that recurses over image extreme points. For affine
//!   barriers and the shipped map classes every λ_k is a maximum of affine
//!   functions of the state, so its supremum over a polytope or segment sits
//!   at an extreme point and the recursion is exact;
//! * closed forms: additive increments for the interval and trace classes,
//!   and a backward recursion over affine functionals for polytopic maps;
//! * expectations `ℓ_k = E[λ_k]`, mean substitution and horizon suprema built
//!   on top of the two above.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierKind, BarrierSpec, RegionSpec};
use crate::distribution::InputDistribution;
use crate::error::{Error, Result};
use crate::models::{Dynamics, MapSpec};
use crate::state::StateVector;
use crate::stats::MeanEstimate;

/// Deepest exact tree evaluated by default (4096 leaves at two extremes).
pub const DEFAULT_K_MAX: usize = 12;
/// Largest functional set kept by the polytopic closed form.
pub const DEFAULT_F_MAX: usize = 4096;

/// A map whose input is replaced by `(v^{e_1}, ..., v^{e_r})`, so that
/// nonlinear dependence on `v` becomes affine in the lifted input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedMap {
    pub base: MapSpec,
    pub exponents: Vec<u32>,
    /// `E[v^{e_j}]` for each exponent.
    pub moments: Vec<f64>,
}

impl LiftedMap {
    fn is_identity(&self) -> bool {
        self.exponents == [1]
    }

    fn is_quadratic_pair(&self) -> bool {
        matches!(self.base, MapSpec::QuadraticInterval) && self.exponents == [1, 2]
    }

    /// Extreme points of the lifted image. For the quadratic interval lifted
    /// by `(1, 2)` the image is `[x + ζ₁ - ζ₂, x + ζ₁ + ζ₂]`.
    pub fn image_extremes(&self, x: &StateVector, zeta: &[f64]) -> Result<Vec<StateVector>> {
        if zeta.len() != self.exponents.len() {
            return Err(Error::model("lifted input has the wrong length"));
        }
        if self.is_identity() {
            return self.base.image_extremes(x, zeta[0]);
        }
        if self.is_quadratic_pair() {
            self.base.check_state(x)?;
            let c = x.coords()[0] + zeta[0];
            return Ok(vec![
                StateVector::scalar(c - zeta[1]),
                StateVector::scalar(c + zeta[1]),
            ]);
        }
        Err(Error::Unsupported(format!(
            "lifting {:?} of {}",
            self.exponents,
            self.base.name()
        )))
    }
}

/// Lifts `map` by the given exponents. Supported: `(1,)` on any map (identity)
/// and `(1, 2)` on the quadratic interval.
pub fn lift_moments(map: &MapSpec, exponents: &[u32], dist: &InputDistribution) -> Result<LiftedMap> {
    let lifted = LiftedMap {
        base: map.clone(),
        exponents: exponents.to_vec(),
        moments: dist.raw_moments(exponents),
    };
    if lifted.is_identity() || lifted.is_quadratic_pair() {
        Ok(lifted)
    } else {
        Err(Error::Unsupported(format!(
            "no lifting with exponents {exponents:?} for {}",
            map.name()
        )))
    }
}

/// A realization `v_0, ..., v_{k-1}` of per-step inputs, each of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPath {
    dim: usize,
    data: Vec<f64>,
}

impl InputPath {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::model("input path length must be a multiple of the input width"));
        }
        Ok(Self { dim, data })
    }

    pub fn scalars(vs: &[f64]) -> Self {
        Self {
            dim: 1,
            data: vs.to_vec(),
        }
    }

    pub fn repeated(input: &[f64], k: usize) -> Self {
        let mut data = Vec::with_capacity(input.len() * k);
        for _ in 0..k {
            data.extend_from_slice(input);
        }
        Self {
            dim: input.len().max(1),
            data,
        }
    }

    /// `k` i.i.d. draws, lifted to the dynamics' input space.
    pub fn sample<R: Rng + ?Sized>(
        dynamics: &Dynamics,
        dist: &InputDistribution,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let dim = dynamics.input_dim();
        let mut data = Vec::with_capacity(dim * k);
        for _ in 0..k {
            data.extend(dynamics.lift(dist.sample(rng)));
        }
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// The first `k` steps.
    pub fn prefix(&self, k: usize) -> InputPath {
        InputPath {
            dim: self.dim,
            data: self.data[..k * self.dim].to_vec(),
        }
    }
}

/// What sits at the leaves of the recursion.
#[derive(Debug, Clone, Copy)]
pub enum LambdaTarget<'a> {
    Barrier(&'a BarrierSpec),
    /// `I_S`; level-set regions are resolved against `barrier`.
    Indicator {
        region: &'a RegionSpec,
        barrier: &'a BarrierSpec,
    },
}

#[derive(Debug, Clone, Copy)]
pub enum LambdaMode<'a> {
    ExactTree,
    ClosedForm,
    /// Every input replaced by its mean (or lifted moment vector).
    MeanSubstitution(&'a InputDistribution),
}

#[derive(Debug, Clone, Copy)]
pub struct LambdaRequest<'a> {
    pub dynamics: &'a Dynamics,
    pub target: LambdaTarget<'a>,
    pub x0: &'a StateVector,
    pub inputs: &'a InputPath,
    pub mode: LambdaMode<'a>,
}

/// Per-step increment of an additive closed form
/// `λ_k = B(x) + Σ_j inc(v_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Increment {
    /// Interval shift under `c0 + c·x`: `|c|·|v|`.
    Shift { c: f64 },
    /// Quadratic interval: `c·v + |c|·v²`.
    Quadratic { c: f64 },
    /// Lifted quadratic interval: `c·ζ₁ + |c|·|ζ₂|`.
    LiftedQuadratic { c: f64 },
    /// Conjugation under a trace barrier: `max(v·Tr M_lo, v·Tr M_hi)`.
    Trace { tr_lo: f64, tr_hi: f64 },
}

impl Increment {
    pub(crate) fn at(&self, input: &[f64]) -> f64 {
        match *self {
            Increment::Shift { c } => c.abs() * input[0].abs(),
            Increment::Quadratic { c } => c * input[0] + c.abs() * input[0] * input[0],
            Increment::LiftedQuadratic { c } => c * input[0] + c.abs() * input[1].abs(),
            Increment::Trace { tr_lo, tr_hi } => (input[0] * tr_lo).max(input[0] * tr_hi),
        }
    }

    /// `E[inc(v)]` over raw draws of the distribution.
    pub(crate) fn expected(&self, dist: &InputDistribution) -> f64 {
        match *self {
            Increment::Shift { c } => c.abs() * dist.mean_abs(),
            Increment::Quadratic { c } | Increment::LiftedQuadratic { c } => {
                c * dist.raw_moment(1) + c.abs() * dist.raw_moment(2)
            }
            Increment::Trace { tr_lo, tr_hi } => {
                tr_lo.max(tr_hi) * dist.mean_positive_part()
                    - tr_lo.min(tr_hi) * dist.mean_negative_part()
            }
        }
    }

    /// Minimum of the increment over raw draws `v` in the support.
    pub(crate) fn min_over_support(&self, dist: &InputDistribution) -> f64 {
        let (lo, hi) = dist.support();
        let f = |v: f64| match *self {
            Increment::Shift { c } => c.abs() * v.abs(),
            Increment::Quadratic { c } | Increment::LiftedQuadratic { c } => c * v + c.abs() * v * v,
            Increment::Trace { tr_lo, tr_hi } => (v * tr_lo).max(v * tr_hi),
        };
        let mut candidates = vec![lo, hi];
        if lo < 0.0 && hi > 0.0 {
            candidates.push(0.0);
        }
        if let Increment::Quadratic { c } | Increment::LiftedQuadratic { c } = *self {
            if c != 0.0 {
                let vertex = -c / (2.0 * c.abs());
                if lo < vertex && vertex < hi {
                    candidates.push(vertex);
                }
            }
        }
        candidates.into_iter().map(f).fold(f64::INFINITY, f64::min)
    }
}

/// Additive closed form for `(dynamics, barrier)`, when one exists.
pub(crate) fn additive_increment(dynamics: &Dynamics, barrier: &BarrierSpec) -> Option<Increment> {
    let (map, lifted_pair) = match dynamics {
        Dynamics::Base(m) => (m, false),
        Dynamics::Lifted(l) if l.is_identity() => (&l.base, false),
        Dynamics::Lifted(l) if l.is_quadratic_pair() => (&l.base, true),
        Dynamics::Lifted(_) => return None,
    };
    match (map, &barrier.kind) {
        (MapSpec::IntervalShift, _) => barrier.scalar_affine().map(|(_, c)| Increment::Shift { c }),
        (MapSpec::QuadraticInterval, _) => barrier.scalar_affine().map(|(_, c)| {
            if lifted_pair {
                Increment::LiftedQuadratic { c }
            } else {
                Increment::Quadratic { c }
            }
        }),
        (MapSpec::UnitaryConjugation { m_lo, m_hi, .. }, BarrierKind::TraceAffine { .. }) => {
            Some(Increment::Trace {
                tr_lo: m_lo.trace(),
                tr_hi: m_hi.trace(),
            })
        }
        _ => None,
    }
}

/// Horizon supremum method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum HorizonMethod {
    /// Mean-substituted `λ_N`, valid when increments are a.s. nonnegative.
    Analytic,
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSup {
    pub value: f64,
    /// 95% half-width for Monte Carlo; `None` for the analytic route.
    pub half_width_95: Option<f64>,
    /// Step attaining the supremum (analytic), or the most frequent pathwise
    /// argmax (Monte Carlo).
    pub attained_k: usize,
}

/// Evaluator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEngine {
    pub k_max: usize,
    pub f_max: usize,
}

impl Default for LambdaEngine {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            f_max: DEFAULT_F_MAX,
        }
    }
}

impl LambdaEngine {
    pub fn evaluate(&self, req: &LambdaRequest<'_>) -> Result<f64> {
        match req.mode {
            LambdaMode::ExactTree => self.exact_tree(req.dynamics, req.target, req.x0, req.inputs),
            LambdaMode::ClosedForm => match req.target {
                LambdaTarget::Barrier(b) => self.closed_form(req.dynamics, b, req.x0, req.inputs),
                LambdaTarget::Indicator { .. } => {
                    self.exact_tree(req.dynamics, req.target, req.x0, req.inputs)
                }
            },
            LambdaMode::MeanSubstitution(dist) => match req.target {
                LambdaTarget::Barrier(b) => self.at_mean(req.dynamics, b, dist, req.x0, req.inputs.len()),
                LambdaTarget::Indicator { .. } => Err(Error::Unsupported(
                    "mean substitution is not available for indicator targets".into(),
                )),
            },
        }
    }

    /// Nested supremum over image extreme points; `O(p^k)`.
    pub fn exact_tree(
        &self,
        dynamics: &Dynamics,
        target: LambdaTarget<'_>,
        x: &StateVector,
        inputs: &InputPath,
    ) -> Result<f64> {
        let k = inputs.len();
        if k > self.k_max {
            return Err(Error::Horizon { k, k_max: self.k_max });
        }
        if inputs.dim() != dynamics.input_dim() && k > 0 {
            return Err(Error::model("input width does not match the dynamics"));
        }
        dynamics.base_map().check_state(x)?;
        tree(dynamics, target, x, inputs, 0)
    }

    /// Closed form when `(dynamics, barrier)` has one; otherwise the exact tree.
    pub fn closed_form(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        x: &StateVector,
        inputs: &InputPath,
    ) -> Result<f64> {
        dynamics.base_map().check_state(x)?;
        if let Some(inc) = additive_increment(dynamics, barrier) {
            let b = barrier.value(x)?;
            return Ok(b + (0..inputs.len()).map(|j| inc.at(inputs.step(j))).sum::<f64>());
        }
        if let (Dynamics::Base(MapSpec::PolytopicLinear { a, b }), BarrierKind::Affine { .. }) =
            (dynamics, &barrier.kind)
        {
            return self.polytopic_functionals(a, b, barrier, x, inputs);
        }
        self.exact_tree(dynamics, LambdaTarget::Barrier(barrier), x, inputs)
    }

    pub fn has_closed_form(&self, dynamics: &Dynamics, barrier: &BarrierSpec) -> bool {
        additive_increment(dynamics, barrier).is_some()
            || matches!(
                (dynamics, &barrier.kind),
                (Dynamics::Base(MapSpec::PolytopicLinear { .. }), BarrierKind::Affine { .. })
            )
    }

    /// Backward recursion over affine functionals `gᵀx + h`: starting from
    /// `B`, each step maps `(g, h)` to `(A_iᵀg, h + gᵀb·v)` for every vertex
    /// matrix. Functionals sharing a gradient are merged keeping the larger
    /// offset, which is exact on all of `Rⁿ`.
    fn polytopic_functionals(
        &self,
        a: &[nalgebra::DMatrix<f64>],
        b: &DVector<f64>,
        barrier: &BarrierSpec,
        x: &StateVector,
        inputs: &InputPath,
    ) -> Result<f64> {
        let (g0, h0) = barrier.affine_functional(x.dim())?;
        let mut fs: Vec<(DVector<f64>, f64)> = vec![(DVector::from_vec(g0), h0)];
        for s in (0..inputs.len()).rev() {
            let v = inputs.step(s)[0];
            let mut next: Vec<(DVector<f64>, f64)> = Vec::with_capacity(fs.len() * a.len());
            for (g, h) in &fs {
                let shift = g.dot(b) * v;
                for ai in a {
                    let g2 = ai.tr_mul(g);
                    let h2 = h + shift;
                    let scale = g2.amax().max(1.0);
                    match next
                        .iter_mut()
                        .find(|(gg, _)| (gg - &g2).amax() <= 1e-14 * scale)
                    {
                        Some(existing) => existing.1 = existing.1.max(h2),
                        None => next.push((g2, h2)),
                    }
                }
            }
            if next.len() > self.f_max {
                return Err(Error::FunctionalCap { cap: self.f_max });
            }
            fs = next;
        }
        let xv = DVector::from_column_slice(x.coords());
        Ok(fs
            .iter()
            .map(|(g, h)| g.dot(&xv) + h)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// `λ_k` with every input set to its mean (lifted dynamics: moment vector).
    pub fn at_mean(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        dist: &InputDistribution,
        x: &StateVector,
        k: usize,
    ) -> Result<f64> {
        let path = InputPath::repeated(&dynamics.mean_input(dist), k);
        self.closed_form(dynamics, barrier, x, &path)
    }

    /// Sample mean of `λ_k` over i.i.d. input paths with a normal 95% half-width.
    #[allow(clippy::too_many_arguments)]
    pub fn ell_estimate<R: Rng + ?Sized>(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        dist: &InputDistribution,
        x: &StateVector,
        k: usize,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<MeanEstimate> {
        if k == 0 {
            return Ok(MeanEstimate::exact(barrier.value(x)?));
        }
        if n_samples < 100 {
            return Err(Error::Precondition("ell_estimate needs at least 100 samples".into()));
        }
        if !self.has_closed_form(dynamics, barrier) && k > self.k_max {
            return Err(Error::Horizon { k, k_max: self.k_max });
        }
        let mut acc = MeanEstimate::accumulator();
        for _ in 0..n_samples {
            let path = InputPath::sample(dynamics, dist, k, rng);
            acc.push(self.closed_form(dynamics, barrier, x, &path)?);
        }
        Ok(acc.finish())
    }

    /// Exact `ℓ_k = E[λ_k]` for additive closed forms.
    pub fn ell_exact(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        dist: &InputDistribution,
        x: &StateVector,
        k: usize,
    ) -> Result<f64> {
        let inc = additive_increment(dynamics, barrier).ok_or_else(|| {
            Error::Unsupported(format!(
                "no closed-form expectation for {} with this barrier; use Monte Carlo",
                dynamics.base_map().name()
            ))
        })?;
        Ok(barrier.value(x)? + k as f64 * inc.expected(dist))
    }

    /// Whether every increment is a.s. nonnegative, so that `sup_{k<=N} λ_k = λ_N`.
    pub fn monotone_certificate(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        dist: &InputDistribution,
    ) -> bool {
        additive_increment(dynamics, barrier).is_some_and(|inc| inc.min_over_support(dist) >= 0.0)
    }

    /// `E[sup_{1<=k<=N} λ_k]`.
    #[allow(clippy::too_many_arguments)]
    pub fn sup_over_horizon<R: Rng + ?Sized>(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        dist: &InputDistribution,
        x: &StateVector,
        horizon: usize,
        method: HorizonMethod,
        rng: &mut R,
    ) -> Result<HorizonSup> {
        if horizon == 0 {
            return Err(Error::Precondition("horizon must be at least 1".into()));
        }
        match method {
            HorizonMethod::Analytic => {
                if !self.monotone_certificate(dynamics, barrier, dist) {
                    return Err(Error::Unsupported(
                        "no monotonicity certificate for the analytic horizon supremum; use Monte Carlo"
                            .into(),
                    ));
                }
                Ok(HorizonSup {
                    value: self.at_mean(dynamics, barrier, dist, x, horizon)?,
                    half_width_95: None,
                    attained_k: horizon,
                })
            }
            HorizonMethod::MonteCarlo { samples } => {
                if samples == 0 {
                    return Err(Error::Precondition("Monte Carlo needs samples".into()));
                }
                if !self.has_closed_form(dynamics, barrier) && horizon > self.k_max {
                    return Err(Error::Horizon {
                        k: horizon,
                        k_max: self.k_max,
                    });
                }
                let mut acc = MeanEstimate::accumulator();
                let mut argmax_counts = vec![0usize; horizon + 1];
                for _ in 0..samples {
                    let path = InputPath::sample(dynamics, dist, horizon, rng);
                    let (best, k) = self.pathwise_sup(dynamics, barrier, x, &path)?;
                    argmax_counts[k] += 1;
                    acc.push(best);
                }
                let est = acc.finish();
                let attained_k = (1..=horizon)
                    .max_by(|&i, &j| argmax_counts[i].cmp(&argmax_counts[j]).then(j.cmp(&i)))
                    .unwrap_or(horizon);
                Ok(HorizonSup {
                    value: est.mean,
                    half_width_95: Some(est.half_width_95),
                    attained_k,
                })
            }
        }
    }

    /// `max_{1<=k<=N} λ_k` along one input path and the first `k` attaining it.
    /// Additive forms reuse prefix sums.
    pub fn pathwise_sup(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        x: &StateVector,
        path: &InputPath,
    ) -> Result<(f64, usize)> {
        let mut best = f64::NEG_INFINITY;
        let mut best_k = 1;
        if let Some(inc) = additive_increment(dynamics, barrier) {
            let mut acc = barrier.value(x)?;
            for j in 0..path.len() {
                acc += inc.at(path.step(j));
                if acc > best {
                    best = acc;
                    best_k = j + 1;
                }
            }
        } else {
            for k in 1..=path.len() {
                let v = self.closed_form(dynamics, barrier, x, &path.prefix(k))?;
                if v > best {
                    best = v;
                    best_k = k;
                }
            }
        }
        Ok((best, best_k))
    }

    /// The per-path sum `Σ_{i=1}^N λ_i`, whose mean is `Σ ℓ_i`.
    pub fn pathwise_sum(
        &self,
        dynamics: &Dynamics,
        barrier: &BarrierSpec,
        x: &StateVector,
        path: &InputPath,
    ) -> Result<f64> {
        if let Some(inc) = additive_increment(dynamics, barrier) {
            let mut acc = barrier.value(x)?;
            let mut total = 0.0;
            for j in 0..path.len() {
                acc += inc.at(path.step(j));
                total += acc;
            }
            return Ok(total);
        }
        (1..=path.len())
            .map(|k| self.closed_form(dynamics, barrier, x, &path.prefix(k)))
            .sum()
    }
}

fn tree(
    dynamics: &Dynamics,
    target: LambdaTarget<'_>,
    x: &StateVector,
    inputs: &InputPath,
    j: usize,
) -> Result<f64> {
    if j == inputs.len() {
        return match target {
            LambdaTarget::Barrier(b) => b.value(x),
            LambdaTarget::Indicator { region, barrier } => {
                Ok(if region.contains(x, barrier)? { 1.0 } else { 0.0 })
            }
        };
    }
    let mut best = f64::NEG_INFINITY;
    for y in dynamics.extremes(x, inputs.step(j))? {
        best = best.max(tree(dynamics, target, &y, inputs, j + 1)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn id_barrier() -> BarrierSpec {
        BarrierSpec::affine(0.0, vec![1.0], 0.0, 20.0).unwrap()
    }

    #[test]
    fn interval_shift_tree_matches_running_sum() {
        let e = LambdaEngine::default();
        let d = Dynamics::Base(MapSpec::IntervalShift);
        let b = id_barrier();
        let x = StateVector::scalar(1.0);
        let v = e
            .exact_tree(&d, LambdaTarget::Barrier(&b), &x, &InputPath::scalars(&[0.1, 0.2]))
            .unwrap();
        assert!((v - 1.3).abs() < 1e-12);
        let v0 = e
            .exact_tree(&d, LambdaTarget::Barrier(&b), &x, &InputPath::scalars(&[]))
            .unwrap();
        assert_eq!(v0, 1.0);
        let cf = e.closed_form(&d, &b, &x, &InputPath::scalars(&[])).unwrap();
        assert_eq!(cf, 1.0);
    }

    #[test]
    fn polytopic_one_step_by_enumeration() {
        let e = LambdaEngine::default();
        let map = systems::polytopic_map();
        let b = systems::polytopic_barrier();
        let x = StateVector::vector(vec![0.0, 1.0]).unwrap();
        let d = Dynamics::Base(map);
        let path = InputPath::scalars(&[1.5]);
        let tree = e.exact_tree(&d, LambdaTarget::Barrier(&b), &x, &path).unwrap();
        // branch values 0.15 and 0.85
        assert!((tree - 0.85).abs() < 1e-12);
        let cf = e.closed_form(&d, &b, &x, &path).unwrap();
        assert!((cf - 0.85).abs() < 1e-12);
    }

    #[test]
    fn quadratic_closed_form_endpoint() {
        let e = LambdaEngine::default();
        let d = Dynamics::Base(MapSpec::QuadraticInterval);
        let v = e
            .closed_form(&d, &id_barrier(), &StateVector::scalar(0.5), &InputPath::scalars(&[0.2]))
            .unwrap();
        assert!((v - 0.74).abs() < 1e-12);
    }

    #[test]
    fn trace_closed_form() {
        let e = LambdaEngine::default();
        let d = Dynamics::Base(systems::trace_map());
        let b = systems::trace_barrier();
        let x = StateVector::from_matrix(&nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[0.2, 0.01, 0.01, 0.1],
        ))
        .unwrap();
        let v = e.closed_form(&d, &b, &x, &InputPath::scalars(&[0.1, -0.1])).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let t = e
            .exact_tree(&d, LambdaTarget::Barrier(&b), &x, &InputPath::scalars(&[0.1, -0.1]))
            .unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tree_rejects_deep_horizons() {
        let e = LambdaEngine::default();
        let d = Dynamics::Base(MapSpec::IntervalShift);
        let path = InputPath::scalars(&[0.1; 13]);
        let err = e
            .exact_tree(&d, LambdaTarget::Barrier(&id_barrier()), &StateVector::scalar(0.0), &path)
            .unwrap_err();
        assert!(matches!(err, Error::Horizon { k: 13, k_max: 12 }));
        // the closed form has no such limit
        assert!(e.closed_form(&d, &id_barrier(), &StateVector::scalar(0.0), &path).is_ok());
    }

    #[test]
    fn functional_cap_is_enforced() {
        let e = LambdaEngine { k_max: 12, f_max: 3 };
        let map = MapSpec::polytopic(
            vec![
                nalgebra::DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.7]),
                nalgebra::DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.6, 0.2]),
            ],
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let b = BarrierSpec::affine(0.0, vec![1.0, 1.0], 0.0, 10.0).unwrap();
        let x = StateVector::vector(vec![1.0, 1.0]).unwrap();
        let err = e
            .closed_form(&Dynamics::Base(map), &b, &x, &InputPath::scalars(&[1.0; 5]))
            .unwrap_err();
        assert!(matches!(err, Error::FunctionalCap { cap: 3 }));
    }

    #[test]
    fn lifting_rules() {
        let dist = InputDistribution::uniform(0.0, 0.2).unwrap();
        let l = lift_moments(&MapSpec::QuadraticInterval, &[1, 2], &dist).unwrap();
        assert!((l.moments[0] - 0.1).abs() < 1e-15);
        assert!((l.moments[1] - 1.0 / 75.0).abs() < 1e-15);
        let id = lift_moments(&MapSpec::IntervalShift, &[1], &dist).unwrap();
        let x = StateVector::scalar(2.0);
        assert_eq!(
            id.image_extremes(&x, &[0.1]).unwrap(),
            MapSpec::IntervalShift.image_extremes(&x, 0.1).unwrap()
        );
        assert!(matches!(
            lift_moments(&MapSpec::QuadraticInterval, &[3], &dist),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn at_mean_examples() {
        let e = LambdaEngine::default();
        let dist = InputDistribution::uniform(0.0, 0.2).unwrap();
        let b = id_barrier();
        let v = e
            .at_mean(&Dynamics::Base(MapSpec::IntervalShift), &b, &dist, &StateVector::scalar(1.0), 4)
            .unwrap();
        assert!((v - 1.4).abs() < 1e-12);
        let lifted = Dynamics::Lifted(lift_moments(&MapSpec::QuadraticInterval, &[1, 2], &dist).unwrap());
        let v = e.at_mean(&lifted, &b, &dist, &StateVector::scalar(0.0), 4).unwrap();
        assert!((v - 17.0 * 4.0 / 150.0).abs() < 1e-12);

        let tdist = InputDistribution::uniform(-0.2, 0.2).unwrap();
        let x = StateVector::from_matrix(&nalgebra::DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.15]))
            .unwrap();
        for k in [1, 5, 30] {
            let v = e
                .at_mean(
                    &Dynamics::Base(systems::trace_map()),
                    &systems::trace_barrier(),
                    &tdist,
                    &x,
                    k,
                )
                .unwrap();
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn ell_estimate_examples() {
        let e = LambdaEngine::default();
        let dist = InputDistribution::uniform(0.0, 0.2).unwrap();
        let b = id_barrier();
        let d = Dynamics::Base(MapSpec::IntervalShift);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let est = e
            .ell_estimate(&d, &b, &dist, &StateVector::scalar(1.0), 3, 20_000, &mut rng)
            .unwrap();
        assert!((est.mean - 1.3).abs() <= est.half_width_95 * 1.5, "{est:?}");
        let est0 = e
            .ell_estimate(&d, &b, &dist, &StateVector::scalar(1.0), 0, 0, &mut rng)
            .unwrap();
        assert_eq!((est0.mean, est0.half_width_95), (1.0, 0.0));
        let q = Dynamics::Base(MapSpec::QuadraticInterval);
        let est = e
            .ell_estimate(&q, &b, &dist, &StateVector::scalar(0.0), 1, 50_000, &mut rng)
            .unwrap();
        assert!((est.mean - (0.1 + 1.0 / 75.0)).abs() <= est.half_width_95 * 1.5, "{est:?}");
        assert!(e
            .ell_estimate(&d, &b, &dist, &StateVector::scalar(1.0), 3, 99, &mut rng)
            .is_err());
    }

    #[test]
    fn ell_estimate_is_reproducible() {
        let e = LambdaEngine::default();
        let dist = InputDistribution::uniform(1.0, 2.0).unwrap();
        let d = Dynamics::Base(systems::polytopic_map());
        let b = systems::polytopic_barrier();
        let x = StateVector::vector(vec![1.0, 2.0]).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            e.ell_estimate(&d, &b, &dist, &x, 4, 500, &mut rng).unwrap()
        };
        let (a, c) = (run(5), run(5));
        assert_eq!(a.mean.to_bits(), c.mean.to_bits());
        assert_eq!(a.half_width_95.to_bits(), c.half_width_95.to_bits());
    }

    #[test]
    fn ell_exact_matches_running_sums() {
        let e = LambdaEngine::default();
        let dist = InputDistribution::uniform(0.0, 0.2).unwrap();
        let b = id_barrier();
        let d = Dynamics::Base(MapSpec::IntervalShift);
        let x = StateVector::scalar(1.0);
        let total: f64 = (1..=4).map(|i| e.ell_exact(&d, &b, &dist, &x, i).unwrap()).sum();
        assert!((total - 5.0).abs() < 1e-12);
        let poly = Dynamics::Base(systems::polytopic_map());
        assert!(e
            .ell_exact(&poly, &systems::polytopic_barrier(), &dist, &StateVector::vector(vec![0.0, 0.0]).unwrap(), 2)
            .is_err());
    }

    #[test]
    fn analytic_horizon_sup() {
        let e = LambdaEngine::default();
        let dist = InputDistribution::uniform(0.0, 0.2).unwrap();
        let b = id_barrier();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dynamics::Base(MapSpec::IntervalShift);
        let s = e
            .sup_over_horizon(&d, &b, &dist, &StateVector::scalar(1.0), 4, HorizonMethod::Analytic, &mut rng)
            .unwrap();
        assert!((s.value - 1.4).abs() < 1e-12);
        assert_eq!(s.attained_k, 4);

        let lifted = Dynamics::Lifted(lift_moments(&MapSpec::QuadraticInterval, &[1, 2], &dist).unwrap());
        let s = e
            .sup_over_horizon(&lifted, &b, &dist, &StateVector::scalar(0.0), 4, HorizonMethod::Analytic, &mut rng)
            .unwrap();
        assert!((s.value - 0.453_333_333_333_333_3).abs() < 1e-12);

        // one step: both routes target E[λ_1]
        let s1 = e
            .sup_over_horizon(&d, &b, &dist, &StateVector::scalar(1.0), 1, HorizonMethod::Analytic, &mut rng)
            .unwrap();
        let lam1 = e.at_mean(&d, &b, &dist, &StateVector::scalar(1.0), 1).unwrap();
        assert_eq!(s1.value, lam1);
        let mc = e
            .sup_over_horizon(
                &d,
                &b,
                &dist,
                &StateVector::scalar(1.0),
                1,
                HorizonMethod::MonteCarlo { samples: 20_000 },
                &mut rng,
            )
            .unwrap();
        assert!((mc.value - lam1).abs() < 3.0 * mc.half_width_95.unwrap());
    }

    #[test]
    fn analytic_requires_monotone_increments() {
        let e = LambdaEngine::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let signed = InputDistribution::uniform(-1.0, 0.5).unwrap();
        let d = Dynamics::Base(MapSpec::QuadraticInterval);
        // c v + v² < 0 for v in (-1, 0)
        assert!(!e.monotone_certificate(&d, &id_barrier(), &signed));
        assert!(matches!(
            e.sup_over_horizon(&d, &id_barrier(), &signed, &StateVector::scalar(1.0), 3, HorizonMethod::Analytic, &mut rng),
            Err(Error::Unsupported(_))
        ));
        let poly = Dynamics::Base(systems::polytopic_map());
        let dist = InputDistribution::uniform(1.0, 2.0).unwrap();
        assert!(!e.monotone_certificate(&poly, &systems::polytopic_barrier(), &dist));
        let tr = Dynamics::Base(systems::trace_map());
        let tdist = InputDistribution::uniform(-0.2, 0.2).unwrap();
        assert!(e.monotone_certificate(&tr, &systems::trace_barrier(), &tdist));
    }

    #[test]
    fn increment_expectations_match_quadrature() {
        let m = 400_000;
        for (inc, (lo, hi)) in [
            (Increment::Shift { c: -2.0 }, (-0.3, 0.5)),
            (Increment::Quadratic { c: 1.5 }, (-0.7, 0.2)),
            (Increment::Trace { tr_lo: -1.0, tr_hi: 2.0 }, (-0.2, 0.3)),
        ] {
            let dist = InputDistribution::uniform(lo, hi).unwrap();
            let h = (hi - lo) / m as f64;
            let q: f64 = (0..m)
                .map(|i| inc.at(&[lo + (i as f64 + 0.5) * h]) * h / (hi - lo))
                .sum();
            assert!((q - inc.expected(&dist)).abs() < 1e-9, "{inc:?}");
            let grid_min = (0..=10_000)
                .map(|i| inc.at(&[lo + (hi - lo) * i as f64 / 10_000.0]))
                .fold(f64::INFINITY, f64::min);
            assert!(inc.min_over_support(&dist) <= grid_min + 1e-12);
            assert!(inc.min_over_support(&dist) >= grid_min - 1e-6);
        }
    }

    #[test]
    fn indicator_tree_is_binary() {
        let e = LambdaEngine::default();
        let b = id_barrier();
        let region = RegionSpec::Superlevel { level: 1.25 };
        let d = Dynamics::Base(MapSpec::IntervalShift);
        let target = LambdaTarget::Indicator {
            region: &region,
            barrier: &b,
        };
        let x = StateVector::scalar(1.0);
        assert_eq!(e.exact_tree(&d, target, &x, &InputPath::scalars(&[0.1, 0.1])).unwrap(), 0.0);
        assert_eq!(e.exact_tree(&d, target, &x, &InputPath::scalars(&[0.1, 0.2])).unwrap(), 1.0);
        let req = LambdaRequest {
            dynamics: &d,
            target,
            x0: &x,
            inputs: &InputPath::scalars(&[0.1]),
            mode: LambdaMode::MeanSubstitution(&InputDistribution::uniform(0.0, 0.2).unwrap()),
        };
        assert!(e.evaluate(&req).is_err());
    }
}
