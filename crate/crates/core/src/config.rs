//! TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierSpec, RegionSpec};
use crate::distribution::InputDistribution;
use crate::error::{Error, Result};
use crate::lambda::lift_moments;
use crate::models::{AdversaryPolicy, Dynamics, MapSpec};
use crate::verifier::{CertificateMethod, CheckPoints, Estimator, Horizon, Ray, SafetyProblem, ThresholdMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub horizon: Horizon,
    pub rho: f64,
    /// Moment-lifting exponents, e.g. `[1, 2]` for `ζ = (v, v²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<Vec<u32>>,
    pub map: MapSpec,
    pub distribution: InputDistribution,
    pub barrier: BarrierSpec,
    pub initial: RegionSpec,
    #[serde(rename = "unsafe")]
    pub unsafe_set: RegionSpec,
    pub state_domain: RegionSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub assume_convex: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    #[default]
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub certificates: Vec<CertificateMethod>,
    /// Initial state for the pointwise certificates, in packed coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default = "default_check_points")]
    pub check_points: CheckPoints,
}

fn default_check_points() -> CheckPoints {
    CheckPoints::BoxVertices
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_traj: usize,
    /// Defaults to the problem horizon when that is finite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub policy: AdversaryPolicy,
    /// Region initial states are drawn from; defaults to the initial set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub method: ThresholdMethod,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    pub tol: f64,
    pub ray: Ray,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> Result<SafetyProblem> {
        self.problem.build()
    }

    pub fn seed(&self) -> Result<u64> {
        self.run
            .seed
            .ok_or_else(|| Error::Config("a seed is required for stochastic commands ([run] seed or --seed)".into()))
    }

    pub fn estimator(&self, choice: EstimatorChoice) -> Result<Estimator> {
        Ok(match choice {
            EstimatorChoice::ClosedForm => Estimator::ClosedForm,
            EstimatorChoice::MonteCarlo => Estimator::MonteCarlo {
                samples: self
                    .run
                    .samples
                    .ok_or_else(|| Error::Config("Monte Carlo needs [run] samples or --samples".into()))?,
                seed: self.seed()?,
            },
        })
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<SafetyProblem> {
        let dynamics = match &self.lift {
            None => Dynamics::Base(self.map.clone()),
            Some(e) => Dynamics::Lifted(lift_moments(&self.map, e, &self.distribution)?),
        };
        let problem = SafetyProblem {
            dynamics,
            dist: self.distribution.clone(),
            barrier: self.barrier.clone(),
            initial: self.initial.clone(),
            unsafe_set: self.unsafe_set.clone(),
            state_domain: self.state_domain.clone(),
            horizon: self.horizon,
            rho: self.rho,
        };
        problem.validate()?;
        Ok(problem)
    }
}
