//! Ready-made systems: a scalar interval shift, its quadratic variant (lifted
//! by `(v, v²)`), a two-vertex polytopic linear system and a 2×2 matrix system
//! under rotation.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};

use crate::barrier::{BarrierSpec, RegionSpec};
use crate::distribution::InputDistribution;
use crate::lambda::lift_moments;
use crate::models::{Dynamics, MapSpec};
use crate::verifier::{Horizon, SafetyProblem};

/// `conv{A₁x, A₂x} + b·v`.
pub fn polytopic_map() -> MapSpec {
    MapSpec::polytopic(
        vec![
            DMatrix::from_row_slice(2, 2, &[-0.2, 1.0, 0.0, 0.3]),
            DMatrix::from_row_slice(2, 2, &[0.1, -1.0, 0.0, 1.0]),
        ],
        DVector::from_vec(vec![0.1, -0.1]),
    )
    .expect("valid polytopic map")
}

/// `B(x) = x₂` with `δ = 1`, `Δ = 3`.
pub fn polytopic_barrier() -> BarrierSpec {
    BarrierSpec::affine(0.0, vec![0.0, 1.0], 1.0, 3.0).expect("valid barrier")
}

/// Polytopic system on `[0,5]²`, `v ~ U[1,2]`, initial set `[0,5]×[0,1]`,
/// unsafe set `{x₂ ≥ 3}`.
pub fn polytopic_problem() -> SafetyProblem {
    SafetyProblem {
        dynamics: Dynamics::Base(polytopic_map()),
        dist: InputDistribution::uniform(1.0, 2.0).expect("valid"),
        barrier: polytopic_barrier(),
        initial: RegionSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![5.0, 1.0],
        },
        unsafe_set: RegionSpec::Superlevel { level: 3.0 },
        state_domain: RegionSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![5.0, 5.0],
        },
        horizon: Horizon::Infinite,
        rho: 0.35,
    }
}

/// `X⁺ ∈ {U X Uᵀ + M(γ)v}` with `U` a rotation by π/4 and
/// `M(γ) = γ[[1, .5], [.5, 1]] + (1-γ)[[0, -1], [-1, 0]]`.
pub fn trace_map() -> MapSpec {
    let (s, c) = FRAC_PI_4.sin_cos();
    MapSpec::unitary(
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
    )
    .expect("valid unitary map")
}

/// `B(X) = Tr(X)` with `δ = 0.3`, `Δ = 1.2`.
pub fn trace_barrier() -> BarrierSpec {
    BarrierSpec::trace(0.0, 0.3, 1.2).expect("valid barrier")
}

/// Matrix system with `v ~ U[-0.2, 0.2]`, initial traces in `(0, 0.3]` and
/// unsafe set `{Tr ≥ 1.2}`.
pub fn trace_problem() -> SafetyProblem {
    SafetyProblem {
        dynamics: Dynamics::Base(trace_map()),
        dist: InputDistribution::uniform(-0.2, 0.2).expect("valid"),
        barrier: trace_barrier(),
        initial: RegionSpec::TraceInterval { lo: 0.0, hi: 0.3 },
        unsafe_set: RegionSpec::Superlevel { level: 1.2 },
        state_domain: RegionSpec::TraceInterval { lo: 0.0, hi: 5.0 },
        horizon: Horizon::Infinite,
        rho: 0.25,
    }
}

fn scalar_problem(dynamics: Dynamics, dist: InputDistribution) -> SafetyProblem {
    SafetyProblem {
        dynamics,
        dist,
        barrier: BarrierSpec::affine(0.0, vec![1.0], 1.0, 20.0).expect("valid barrier"),
        initial: RegionSpec::Box {
            lo: vec![0.0],
            hi: vec![1.0],
        },
        unsafe_set: RegionSpec::Superlevel { level: 20.0 },
        state_domain: RegionSpec::Box {
            lo: vec![0.0],
            hi: vec![20.0],
        },
        horizon: Horizon::Finite(4),
        rho: 0.25,
    }
}

/// `x⁺ ∈ [x - v, x + v]`, `v ~ U[0, 0.2]`, `B(x) = x`, `N = 4`, `ρ = 0.25`, `Δ = 20`.
pub fn interval_shift_problem() -> SafetyProblem {
    scalar_problem(
        Dynamics::Base(MapSpec::IntervalShift),
        InputDistribution::uniform(0.0, 0.2).expect("valid"),
    )
}

/// `x⁺ ∈ [x + v - v², x + v + v²]` lifted by `ζ = (v, v²)`, otherwise as
/// [`interval_shift_problem`].
pub fn lifted_quadratic_problem() -> SafetyProblem {
    let dist = InputDistribution::uniform(0.0, 0.2).expect("valid");
    let lifted = lift_moments(&MapSpec::QuadraticInterval, &[1, 2], &dist).expect("supported lifting");
    scalar_problem(Dynamics::Lifted(lifted), dist)
}
