//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdibarrier::{InputPath, SafetyProblem};

/// A reproducible input path of length `k` for `problem`.
pub fn sample_path(problem: &SafetyProblem, k: usize, seed: u64) -> InputPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    InputPath::sample(&problem.dynamics, &problem.dist, k, &mut rng)
}
