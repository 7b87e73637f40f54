//! Probabilistic safety certificates for stochastic difference inclusions
//! `x⁺ ∈ G(x, v)` with i.i.d. inputs, built from barrier functions.
//!
//! The pieces: set-valued map classes and adversaries ([`models`]), barrier
//! candidates and regions ([`barrier`]), the λ-recursions ([`lambda`]),
//! certificates ([`verifier`]) and Monte Carlo cross-checks ([`simulator`]).

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod config;
pub mod distribution;
pub mod error;
pub mod geometry;
pub mod lambda;
pub mod models;
pub mod probe;
pub mod simulator;
pub mod state;
pub mod stats;
pub mod systems;
pub mod verifier;

pub use barrier::{candidate_check, concavity_probe, BarrierKind, BarrierSpec, CandidateReport, RegionSpec};
pub use config::RunConfig;
pub use distribution::InputDistribution;
pub use error::{Error, Result};
pub use lambda::{
    lift_moments, HorizonMethod, HorizonSup, InputPath, LambdaEngine, LambdaMode, LambdaRequest, LambdaTarget,
    LiftedMap,
};
pub use models::{convexity_probe, AdversaryPolicy, Dynamics, MapSpec};
pub use probe::{ProbeReport, ProbeWitness};
pub use simulator::{compare_to_certificate, run_batch, run_trajectory, Trajectory, TrajectoryBatch, Verdict};
pub use state::{StateShape, StateVector};
pub use stats::MeanEstimate;
pub use verifier::{
    concave_sup_bound, infinite_horizon_bound, sum_bound, supermartingale_certificate, supermartingale_check,
    threshold_search, CertificateMethod, CertificateReport, CheckPoints, Estimator, Horizon, Ray, SafetyProblem,
    SupermartingaleReport, ThresholdMethod, ThresholdResult, VerifyOptions,
};
