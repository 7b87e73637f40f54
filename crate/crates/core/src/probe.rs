use serde::{Deserialize, Serialize};

/// Tolerance used by the structural probes.
pub const PROBE_TOL: f64 = 1e-9;

/// Outcome of a randomized structural check (convexity, concavity, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    /// Largest positive violation seen; `0` when none.
    pub worst_violation: f64,
    /// Number of trials whose violation exceeded the tolerance.
    pub violations: usize,
    pub witness: Option<ProbeWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeWitness {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub theta: f64,
}

impl ProbeReport {
    pub(crate) fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            trials: 0,
            worst_violation: 0.0,
            violations: 0,
            witness: None,
        }
    }

    pub(crate) fn record(&mut self, violation: f64, witness: impl FnOnce() -> ProbeWitness) {
        self.trials += 1;
        if violation > PROBE_TOL {
            self.violations += 1;
            self.passed = false;
        }
        if violation > self.worst_violation {
            self.worst_violation = violation;
            self.witness = Some(witness());
        }
    }
}
