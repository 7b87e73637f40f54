//! Barrier functions, the regions they are checked against, and the
//! structural checks on them (candidate conditions, concavity).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{ProbeReport, ProbeWitness};
use crate::state::{StateShape, StateVector};

/// Values below this are treated as a negative barrier.
pub const NONNEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierKind {
    /// `B(x) = c0 + cᵀx`; for matrix states `x` is the packed upper triangle.
    Affine { c0: f64, c: Vec<f64> },
    /// `B(X) = offset + Tr(X)`.
    TraceAffine { offset: f64 },
}

/// A barrier with its initial level `δ` and unsafe level `Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    #[serde(flatten)]
    pub kind: BarrierKind,
    /// δ: bound on `B` over the initial set.
    pub initial_level: f64,
    /// Δ: lower bound on `B` over the unsafe set.
    pub unsafe_level: f64,
}

impl BarrierSpec {
    pub fn new(kind: BarrierKind, initial_level: f64, unsafe_level: f64) -> Result<Self> {
        let b = Self {
            kind,
            initial_level,
            unsafe_level,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn affine(c0: f64, c: Vec<f64>, initial_level: f64, unsafe_level: f64) -> Result<Self> {
        Self::new(BarrierKind::Affine { c0, c }, initial_level, unsafe_level)
    }

    pub fn trace(offset: f64, initial_level: f64, unsafe_level: f64) -> Result<Self> {
        Self::new(BarrierKind::TraceAffine { offset }, initial_level, unsafe_level)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, big) = (self.initial_level, self.unsafe_level);
        if !(d.is_finite() && big.is_finite()) || d < 0.0 || big <= d {
            return Err(Error::Barrier(format!(
                "levels must satisfy unsafe_level > initial_level >= 0, got {d} and {big}"
            )));
        }
        match &self.kind {
            BarrierKind::Affine { c0, c } => {
                if c.is_empty() || !c0.is_finite() || c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Barrier("affine barrier needs finite, nonempty c".into()));
                }
            }
            BarrierKind::TraceAffine { offset } => {
                if !offset.is_finite() {
                    return Err(Error::Barrier("trace offset must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Raw value without the nonnegativity guard. The λ-engine uses this to
    /// evaluate image points that fall outside the state domain.
    pub fn value(&self, x: &StateVector) -> Result<f64> {
        match &self.kind {
            BarrierKind::Affine { c0, c } => {
                if c.len() != x.dim() {
                    return Err(Error::model(format!(
                        "barrier has {} coefficients, state has dimension {}",
                        c.len(),
                        x.dim()
                    )));
                }
                Ok(c0 + c.iter().zip(x.coords()).map(|(a, b)| a * b).sum::<f64>())
            }
            BarrierKind::TraceAffine { offset } => Ok(offset + x.trace()?),
        }
    }

    /// `B(x)`, rejecting values below zero.
    pub fn evaluate(&self, x: &StateVector) -> Result<f64> {
        let v = self.value(x)?;
        if v < -NONNEGATIVITY_TOL {
            return Err(Error::NegativeBarrier {
                value: v,
                witness: x.coords().to_vec(),
            });
        }
        Ok(v)
    }

    /// `(gradient, offset)` of `B` as an affine functional of the packed
    /// coordinates of a state of dimension `dim`.
    pub fn affine_functional(&self, dim: usize) -> Result<(Vec<f64>, f64)> {
        match &self.kind {
            BarrierKind::Affine { c0, c } => {
                if c.len() != dim {
                    return Err(Error::model(format!(
                        "barrier has {} coefficients, state has dimension {dim}",
                        c.len()
                    )));
                }
                Ok((c.clone(), *c0))
            }
            BarrierKind::TraceAffine { offset } => {
                let n = packed_order(dim).ok_or_else(|| {
                    Error::model(format!("{dim} is not a packed symmetric matrix size"))
                })?;
                let mut g = vec![0.0; dim];
                let mut k = 0;
                for i in 0..n {
                    g[k] = 1.0;
                    k += n - i;
                }
                Ok((g, *offset))
            }
        }
    }

    /// Coefficients `(c0, c)` when this is an affine barrier on a scalar state.
    pub fn scalar_affine(&self) -> Option<(f64, f64)> {
        match &self.kind {
            BarrierKind::Affine { c0, c } if c.len() == 1 => Some((*c0, c[0])),
            _ => None,
        }
    }

    /// Membership in the sublevel set `K_level = {x : B(x) <= level}`.
    pub fn in_sublevel(&self, x: &StateVector, level: f64) -> Result<bool> {
        Ok(self.value(x)? <= level)
    }
}

/// `n` with `n(n+1)/2 == dim`.
pub(crate) fn packed_order(dim: usize) -> Option<usize> {
    let n = (((8 * dim + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n * (n + 1) / 2 == dim && n > 0).then_some(n)
}

/// Initial, unsafe or domain sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    /// Axis-aligned box over the packed coordinates.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : B(x) <= level}` for the problem's barrier.
    Sublevel { level: f64 },
    /// `{x : B(x) >= level}` for the problem's barrier.
    Superlevel { level: f64 },
    /// Symmetric matrices with `lo <= Tr(X) <= hi`.
    TraceInterval { lo: f64, hi: f64 },
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegionSpec::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::model("box bounds must be nonempty and of equal length"));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::model("box requires lo <= hi componentwise"));
                }
            }
            RegionSpec::TraceInterval { lo, hi } => {
                if !(lo <= hi) {
                    return Err(Error::model("trace interval requires lo <= hi"));
                }
            }
            RegionSpec::Sublevel { level } | RegionSpec::Superlevel { level } => {
                if !level.is_finite() {
                    return Err(Error::model("level must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &StateVector, barrier: &BarrierSpec) -> Result<bool> {
        match self {
            RegionSpec::Box { lo, hi } => {
                if lo.len() != x.dim() {
                    return Err(Error::model(format!(
                        "box has dimension {}, state has {}",
                        lo.len(),
                        x.dim()
                    )));
                }
                Ok(x.coords()
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *a <= *v && *v <= *b))
            }
            RegionSpec::Sublevel { level } => Ok(barrier.value(x)? <= *level),
            RegionSpec::Superlevel { level } => Ok(barrier.value(x)? >= *level),
            RegionSpec::TraceInterval { lo, hi } => {
                let t = x.trace()?;
                Ok(*lo <= t && t <= *hi)
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            RegionSpec::Box { lo, hi } => lo.iter().chain(hi).all(|v| v.is_finite()),
            RegionSpec::TraceInterval { lo, hi } => lo.is_finite() && hi.is_finite(),
            _ => false,
        }
    }

    /// Draws a state from the region.
    ///
    /// Boxes are sampled uniformly. Trace intervals draw `t` uniformly from
    /// `(lo, hi]`, split it over the diagonal with flat Dirichlet weights and
    /// conjugate by a random orthogonal matrix, giving positive definite
    /// samples whenever `lo >= 0`.
    pub fn sample<R: Rng + ?Sized>(&self, shape: StateShape, rng: &mut R) -> Result<StateVector> {
        if !self.is_bounded() {
            return Err(Error::UnsupportedRegion(format!(
                "cannot sample from unbounded region {self:?}"
            )));
        }
        match self {
            RegionSpec::Box { lo, hi } => {
                let coords = lo
                    .iter()
                    .zip(hi)
                    .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                    .collect();
                match shape {
                    StateShape::Vector => StateVector::vector(coords),
                    StateShape::SymMatrix { .. } => StateVector::from_parts(coords, shape),
                }
            }
            RegionSpec::TraceInterval { lo, hi } => {
                let StateShape::SymMatrix { n } = shape else {
                    return Err(Error::UnsupportedRegion(
                        "trace interval needs matrix states".into(),
                    ));
                };
                let t = lo + (hi - lo) * (1.0 - rng.random::<f64>());
                let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = w.iter().sum();
                let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    n,
                    w.iter().map(|wi| t * wi / total),
                ));
                let q = random_orthogonal(n, rng);
                Ok(StateVector::pack_symmetric(&(&q * diag * q.transpose())))
            }
            _ => unreachable!("unbounded regions rejected above"),
        }
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
pub(crate) fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub ok: bool,
    pub max_on_initial: f64,
    pub min_on_unsafe: f64,
    pub initial_witness: Option<Vec<f64>>,
    pub unsafe_witness: Option<Vec<f64>>,
    /// True when a level set of `B` itself made the check hold by construction.
    pub by_construction: bool,
}

/// Checks `B <= δ` on `initial` and `B >= Δ` on `unsafe_set`.
///
/// Affine barriers over boxes are resolved exactly (the extrema sit at box
/// vertices), level sets of `B` hold by construction, and trace barriers over
/// trace intervals reduce to the interval endpoints.
pub fn candidate_check(
    barrier: &BarrierSpec,
    initial: &RegionSpec,
    unsafe_set: &RegionSpec,
) -> Result<CandidateReport> {
    let (max_o, wit_o, cons_o) = extremum(barrier, initial, Extremum::Max)?;
    let (min_u, wit_u, cons_u) = extremum(barrier, unsafe_set, Extremum::Min)?;
    let tol = 1e-12 * barrier.unsafe_level.abs().max(1.0);
    Ok(CandidateReport {
        ok: max_o <= barrier.initial_level + tol && min_u >= barrier.unsafe_level - tol,
        max_on_initial: max_o,
        min_on_unsafe: min_u,
        initial_witness: wit_o,
        unsafe_witness: wit_u,
        by_construction: cons_o && cons_u,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Extremum {
    Max,
    Min,
}

/// Exact extremum of `B` over a region: `(value, witness, by_construction)`.
pub(crate) fn extremum(
    barrier: &BarrierSpec,
    region: &RegionSpec,
    which: Extremum,
) -> Result<(f64, Option<Vec<f64>>, bool)> {
    match (region, which) {
        (RegionSpec::Sublevel { level }, Extremum::Max)
        | (RegionSpec::Superlevel { level }, Extremum::Min) => Ok((*level, None, true)),
        (RegionSpec::Box { lo, hi }, _) => {
            if !region.is_bounded() {
                return Err(Error::UnsupportedRegion("unbounded box".into()));
            }
            let (g, g0) = barrier.affine_functional(lo.len())?;
            let witness: Vec<f64> = g
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(gi, (a, b))| {
                    let up = match which {
                        Extremum::Max => *gi >= 0.0,
                        Extremum::Min => *gi < 0.0,
                    };
                    if up {
                        *b
                    } else {
                        *a
                    }
                })
                .collect();
            let v = g0 + g.iter().zip(&witness).map(|(a, b)| a * b).sum::<f64>();
            Ok((v, Some(witness), false))
        }
        (RegionSpec::TraceInterval { lo, hi }, _) => match barrier.kind {
            BarrierKind::TraceAffine { offset } => {
                let t = if which == Extremum::Max { *hi } else { *lo };
                if !t.is_finite() {
                    return Err(Error::UnsupportedRegion(
                        "trace interval is unbounded in the needed direction".into(),
                    ));
                }
                Ok((offset + t, None, false))
            }
            BarrierKind::Affine { .. } => Err(Error::UnsupportedRegion(
                "affine barrier over a trace interval has no finite extremum".into(),
            )),
        },
        _ => Err(Error::UnsupportedRegion(format!(
            "no finite extremum of B over {region:?}"
        ))),
    }
}

/// Randomized midpoint-concavity check of `B` over `domain`.
pub fn concavity_probe<R: Rng + ?Sized>(
    barrier: &BarrierSpec,
    domain: &RegionSpec,
    shape: StateShape,
    n_trials: usize,
    rng: &mut R,
) -> Result<ProbeReport> {
    if n_trials == 0 {
        return Err(Error::Precondition("n_trials must be at least 1".into()));
    }
    let mut report = ProbeReport::new("barrier_concavity");
    for _ in 0..n_trials {
        let x1 = domain.sample(shape, rng)?;
        let x2 = domain.sample(shape, rng)?;
        let theta: f64 = rng.random();
        let mid = x1.blend(&x2, theta)?;
        let lhs = barrier.value(&mid)?;
        let rhs = theta * barrier.value(&x1)? + (1.0 - theta) * barrier.value(&x2)?;
        let violation = (rhs - lhs).max(0.0);
        report.record(violation, || ProbeWitness {
            states: vec![x1.coords().to_vec(), x2.coords().to_vec()],
            inputs: vec![],
            theta,
        });
    }
    Ok(report)
}
