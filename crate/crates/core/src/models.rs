//! Set-valued map classes `x⁺ ∈ G(x, v)` with exact extreme-point images,
//! adversary policies, and the graph-convexity probe.
//!
//! Every shipped class has a polytope or segment as its image, so an image is
//! represented exactly by its finite list of extreme points. Upper
//! semicontinuity and local boundedness hold for each class by construction
//! (the extreme points depend continuously on `(x, v)`) and are not checked.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierSpec, RegionSpec};
use crate::distribution::InputDistribution;
use crate::error::{Error, Result};
use crate::geometry::hull_distance;
use crate::lambda::LiftedMap;
use crate::probe::{ProbeReport, ProbeWitness};
use crate::state::{StateShape, StateVector, SYMMETRY_TOL};

/// Orthogonality tolerance `‖UᵀU - I‖_∞` for the conjugation map.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub enum MapSpec {
    /// `G(x, v) = [x - v, x + v]` on scalar states.
    IntervalShift,
    /// `G(x, v) = [x + v - v², x + v + v²]` on scalar states.
    QuadraticInterval,
    /// `G(x, v) = conv{A_i x + b v}`.
    PolytopicLinear { a: Vec<DMatrix<f64>>, b: DVector<f64> },
    /// `G(X, v) = {U X Uᵀ + M(γ) v}` with `M` linear between `m_lo` and `m_hi`.
    UnitaryConjugation {
        u: DMatrix<f64>,
        m_lo: DMatrix<f64>,
        m_hi: DMatrix<f64>,
    },
}

impl MapSpec {
    pub fn polytopic(a: Vec<DMatrix<f64>>, b: DVector<f64>) -> Result<Self> {
        let m = MapSpec::PolytopicLinear { a, b };
        m.validate()?;
        Ok(m)
    }

    pub fn unitary(u: DMatrix<f64>, m_lo: DMatrix<f64>, m_hi: DMatrix<f64>) -> Result<Self> {
        let m = MapSpec::UnitaryConjugation { u, m_lo, m_hi };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MapSpec::IntervalShift | MapSpec::QuadraticInterval => Ok(()),
            MapSpec::PolytopicLinear { a, b } => {
                if a.is_empty() {
                    return Err(Error::model("polytopic map needs at least one matrix"));
                }
                let n = b.len();
                if n == 0 {
                    return Err(Error::model("polytopic map needs a nonempty b"));
                }
                if a.len() > crate::geometry::MAX_HULL_POINTS {
                    return Err(Error::model(format!(
                        "at most {} vertex matrices are supported",
                        crate::geometry::MAX_HULL_POINTS
                    )));
                }
                for (i, ai) in a.iter().enumerate() {
                    if ai.nrows() != n || ai.ncols() != n {
                        return Err(Error::model(format!(
                            "A[{i}] is {}x{}, expected {n}x{n}",
                            ai.nrows(),
                            ai.ncols()
                        )));
                    }
                }
                Ok(())
            }
            MapSpec::UnitaryConjugation { u, m_lo, m_hi } => {
                let n = u.nrows();
                if n == 0 || u.ncols() != n {
                    return Err(Error::model("U must be square and nonempty"));
                }
                for (name, m) in [("m_lo", m_lo), ("m_hi", m_hi)] {
                    if m.nrows() != n || m.ncols() != n {
                        return Err(Error::model(format!("{name} must be {n}x{n}")));
                    }
                    if (m - m.transpose()).amax() > SYMMETRY_TOL {
                        return Err(Error::model(format!("{name} must be symmetric")));
                    }
                }
                let dev = (u.transpose() * u - DMatrix::identity(n, n)).amax();
                if dev > ORTHOGONALITY_TOL {
                    return Err(Error::model(format!(
                        "U is not orthogonal: max |UᵀU - I| = {dev:e}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn state_shape(&self) -> StateShape {
        match self {
            MapSpec::UnitaryConjugation { u, .. } => StateShape::SymMatrix { n: u.nrows() },
            _ => StateShape::Vector,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            MapSpec::IntervalShift | MapSpec::QuadraticInterval => 1,
            MapSpec::PolytopicLinear { b, .. } => b.len(),
            MapSpec::UnitaryConjugation { u, .. } => u.nrows() * (u.nrows() + 1) / 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapSpec::IntervalShift => "interval_shift",
            MapSpec::QuadraticInterval => "quadratic_interval",
            MapSpec::PolytopicLinear { .. } => "polytopic_linear",
            MapSpec::UnitaryConjugation { .. } => "unitary_conjugation",
        }
    }

    pub fn check_state(&self, x: &StateVector) -> Result<()> {
        if x.shape() != self.state_shape() || x.dim() != self.state_dim() {
            return Err(Error::model(format!(
                "{} expects a {:?} state of dimension {}, got {:?} of dimension {}",
                self.name(),
                self.state_shape(),
                self.state_dim(),
                x.shape(),
                x.dim()
            )));
        }
        Ok(())
    }

    /// Extreme points of `G(x, v)`: two endpoints for the interval and
    /// conjugation classes, one point per vertex matrix for the polytopic class.
    /// Duplicates are kept, so a zero-width image yields the same point twice.
    pub fn image_extremes(&self, x: &StateVector, v: f64) -> Result<Vec<StateVector>> {
        self.check_state(x)?;
        match self {
            MapSpec::IntervalShift => {
                let c = x.coords()[0];
                Ok(vec![StateVector::scalar(c - v), StateVector::scalar(c + v)])
            }
            MapSpec::QuadraticInterval => {
                let c = x.coords()[0] + v;
                let w = v * v;
                Ok(vec![StateVector::scalar(c - w), StateVector::scalar(c + w)])
            }
            MapSpec::PolytopicLinear { a, b } => {
                let xv = DVector::from_column_slice(x.coords());
                a.iter()
                    .map(|ai| {
                        let y = ai * &xv + b * v;
                        StateVector::vector(y.as_slice().to_vec())
                    })
                    .collect()
            }
            MapSpec::UnitaryConjugation { u, m_lo, m_hi } => {
                let xm = x.to_matrix()?;
                let y = u * xm * u.transpose();
                Ok(vec![
                    StateVector::pack_symmetric(&(&y + m_lo * v)),
                    StateVector::pack_symmetric(&(&y + m_hi * v)),
                ])
            }
        }
    }

    /// Whether `y ∈ G(x, v)` up to `tol`.
    pub fn contains(&self, x: &StateVector, v: f64, y: &StateVector, tol: f64) -> Result<bool> {
        let ext = self.image_extremes(x, v)?;
        y.check_same_shape(&ext[0])?;
        let pts: Vec<Vec<f64>> = ext.iter().map(|e| e.coords().to_vec()).collect();
        Ok(hull_distance(&pts, y.coords()) <= tol)
    }

    /// One adversarial successor of `x` under input `v`.
    pub fn sample_successor<R: Rng + ?Sized>(
        &self,
        x: &StateVector,
        v: f64,
        policy: &AdversaryPolicy,
        barrier: Option<&BarrierSpec>,
        rng: &mut R,
    ) -> Result<StateVector> {
        let ext = self.image_extremes(x, v)?;
        policy.select(&ext, barrier, rng)
    }
}

/// How the adversary picks a successor from the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AdversaryPolicy {
    /// Extreme point maximizing `B`; ties go to the lowest index.
    GreedyBarrier,
    FixedExtreme { index: usize },
    UniformRandomExtreme,
    /// Convex combination with flat Dirichlet weights.
    UniformRandomConvexCombination,
}

impl AdversaryPolicy {
    pub fn name(&self) -> String {
        match self {
            AdversaryPolicy::GreedyBarrier => "greedy_barrier".into(),
            AdversaryPolicy::FixedExtreme { index } => format!("fixed_extreme_{index}"),
            AdversaryPolicy::UniformRandomExtreme => "uniform_random_extreme".into(),
            AdversaryPolicy::UniformRandomConvexCombination => {
                "uniform_random_convex_combination".into()
            }
        }
    }

    pub fn select<R: Rng + ?Sized>(
        &self,
        extremes: &[StateVector],
        barrier: Option<&BarrierSpec>,
        rng: &mut R,
    ) -> Result<StateVector> {
        match self {
            AdversaryPolicy::GreedyBarrier => {
                let b = barrier.ok_or_else(|| {
                    Error::Precondition("greedy adversary needs a barrier".into())
                })?;
                let mut best = 0;
                let mut best_val = b.value(&extremes[0])?;
                for (i, e) in extremes.iter().enumerate().skip(1) {
                    let val = b.value(e)?;
                    if val > best_val {
                        best = i;
                        best_val = val;
                    }
                }
                Ok(extremes[best].clone())
            }
            AdversaryPolicy::FixedExtreme { index } => extremes.get(*index).cloned().ok_or_else(|| {
                Error::model(format!(
                    "extreme index {index} out of range for an image with {} points",
                    extremes.len()
                ))
            }),
            AdversaryPolicy::UniformRandomExtreme => {
                let i = rng.random_range(0..extremes.len());
                Ok(extremes[i].clone())
            }
            AdversaryPolicy::UniformRandomConvexCombination => {
                let w: Vec<f64> = (0..extremes.len()).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = w.iter().sum();
                let dim = extremes[0].dim();
                let mut coords = vec![0.0; dim];
                for (e, wi) in extremes.iter().zip(&w) {
                    for (c, v) in coords.iter_mut().zip(e.coords()) {
                        *c += wi / total * v;
                    }
                }
                extremes[0].with_coords(coords)
            }
        }
    }
}

/// The dynamics the λ-engine and verifier work on: a base map with scalar
/// inputs, or a moment-lifted map whose input is `(v^{e_1}, ..., v^{e_r})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Base(MapSpec),
    Lifted(LiftedMap),
}

impl Dynamics {
    pub fn base_map(&self) -> &MapSpec {
        match self {
            Dynamics::Base(m) => m,
            Dynamics::Lifted(l) => &l.base,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Dynamics::Base(_) => 1,
            Dynamics::Lifted(l) => l.exponents.len(),
        }
    }

    pub fn state_shape(&self) -> StateShape {
        self.base_map().state_shape()
    }

    pub fn extremes(&self, x: &StateVector, input: &[f64]) -> Result<Vec<StateVector>> {
        if input.len() != self.input_dim() {
            return Err(Error::model(format!(
                "input has {} components, dynamics expect {}",
                input.len(),
                self.input_dim()
            )));
        }
        match self {
            Dynamics::Base(m) => m.image_extremes(x, input[0]),
            Dynamics::Lifted(l) => l.image_extremes(x, input),
        }
    }

    /// Input vector corresponding to a raw draw `v`.
    pub fn lift(&self, v: f64) -> Vec<f64> {
        match self {
            Dynamics::Base(_) => vec![v],
            Dynamics::Lifted(l) => l.exponents.iter().map(|&e| v.powi(e as i32)).collect(),
        }
    }

    /// `E[input]`: the mean, or the raw-moment vector for lifted dynamics.
    pub fn mean_input(&self, dist: &InputDistribution) -> Vec<f64> {
        match self {
            Dynamics::Base(_) => vec![dist.mean()],
            Dynamics::Lifted(l) => dist.raw_moments(&l.exponents),
        }
    }

    /// Draw from the convex set the inputs range over: the support for a base
    /// map, the box of per-coordinate ranges for a lifted one.
    pub fn sample_probe_input<R: Rng + ?Sized>(&self, dist: &InputDistribution, rng: &mut R) -> Vec<f64> {
        match self {
            Dynamics::Base(_) => vec![dist.sample(rng)],
            Dynamics::Lifted(l) => {
                let (lo, hi) = dist.support();
                l.exponents
                    .iter()
                    .map(|&e| {
                        let (a, b) = power_range(lo, hi, e);
                        a + (b - a) * rng.random::<f64>()
                    })
                    .collect()
            }
        }
    }
}

/// Range of `v^e` for `v ∈ [lo, hi]`.
pub(crate) fn power_range(lo: f64, hi: f64, e: u32) -> (f64, f64) {
    let (a, b) = (lo.powi(e as i32), hi.powi(e as i32));
    let (mut mn, mx) = (a.min(b), a.max(b));
    if e.is_multiple_of(2) && lo < 0.0 && hi > 0.0 {
        mn = 0.0;
    }
    (mn, mx)
}

/// Randomized check of graph convexity of `G`: for random `(x₁, v₁)`,
/// `(x₂, v₂)` and `θ`, every blend `θp + (1-θ)q` of image extreme points must
/// lie in `G(θx₁ + (1-θ)x₂, θv₁ + (1-θ)v₂)`.
///
/// The violation is the support-function gap of the blended point against the
/// blended image, i.e. its distance to that hull. States are drawn from
/// `domain`, inputs from the distribution support (lifted: the moment box).
pub fn convexity_probe<R: Rng + ?Sized>(
    dynamics: &Dynamics,
    dist: &InputDistribution,
    domain: &RegionSpec,
    n_trials: usize,
    rng: &mut R,
) -> Result<ProbeReport> {
    if n_trials == 0 {
        return Err(Error::Precondition("n_trials must be at least 1".into()));
    }
    let shape = dynamics.state_shape();
    let mut report = ProbeReport::new("map_graph_convexity");
    for _ in 0..n_trials {
        let x1 = domain.sample(shape, rng)?;
        let x2 = domain.sample(shape, rng)?;
        let v1 = dynamics.sample_probe_input(dist, rng);
        let v2 = dynamics.sample_probe_input(dist, rng);
        let theta: f64 = rng.random();
        let xb = x1.blend(&x2, theta)?;
        let vb: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let e1 = dynamics.extremes(&x1, &v1)?;
        let e2 = dynamics.extremes(&x2, &v2)?;
        let eb: Vec<Vec<f64>> = dynamics
            .extremes(&xb, &vb)?
            .iter()
            .map(|e| e.coords().to_vec())
            .collect();
        let mut worst = 0.0f64;
        for p in &e1 {
            for q in &e2 {
                let z = p.blend(q, theta)?;
                worst = worst.max(hull_distance(&eb, z.coords()));
            }
        }
        report.record(worst, || ProbeWitness {
            states: vec![x1.coords().to_vec(), x2.coords().to_vec()],
            inputs: vec![v1.clone(), v2.clone()],
            theta,
        });
    }
    Ok(report)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum MapRepr {
    IntervalShift,
    QuadraticInterval,
    PolytopicLinear {
        a: Vec<Vec<Vec<f64>>>,
        b: Vec<f64>,
    },
    UnitaryConjugation {
        u: Vec<Vec<f64>>,
        m_lo: Vec<Vec<f64>>,
        m_hi: Vec<Vec<f64>>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::model("matrix rows must be nonempty and of equal length"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parses nested row-major arrays into a matrix.
pub fn parse_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    matrix_from_rows(rows)
}

impl TryFrom<MapRepr> for MapSpec {
    type Error = Error;

    fn try_from(r: MapRepr) -> Result<Self> {
        let m = match r {
            MapRepr::IntervalShift => MapSpec::IntervalShift,
            MapRepr::QuadraticInterval => MapSpec::QuadraticInterval,
            MapRepr::PolytopicLinear { a, b } => MapSpec::PolytopicLinear {
                a: a.iter().map(|m| matrix_from_rows(m)).collect::<Result<_>>()?,
                b: DVector::from_vec(b),
            },
            MapRepr::UnitaryConjugation { u, m_lo, m_hi } => MapSpec::UnitaryConjugation {
                u: matrix_from_rows(&u)?,
                m_lo: matrix_from_rows(&m_lo)?,
                m_hi: matrix_from_rows(&m_hi)?,
            },
        };
        m.validate()?;
        Ok(m)
    }
}

impl From<MapSpec> for MapRepr {
    fn from(m: MapSpec) -> Self {
        match m {
            MapSpec::IntervalShift => MapRepr::IntervalShift,
            MapSpec::QuadraticInterval => MapRepr::QuadraticInterval,
            MapSpec::PolytopicLinear { a, b } => MapRepr::PolytopicLinear {
                a: a.iter().map(matrix_to_rows).collect(),
                b: b.as_slice().to_vec(),
            },
            MapSpec::UnitaryConjugation { u, m_lo, m_hi } => MapRepr::UnitaryConjugation {
                u: matrix_to_rows(&u),
                m_lo: matrix_to_rows(&m_lo),
                m_hi: matrix_to_rows(&m_hi),
            },
        }
    }
}
