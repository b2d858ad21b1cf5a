//! Deterministic simulator for orchestrating generative-AI training rounds
//! over shared sensing, communication and computing resources.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file fix the common choices.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gain;
pub mod netmodel;
pub mod policies;
pub mod sacrl;
pub mod scalar;
pub mod urp;
pub mod workload;
pub mod zeros;

pub use error::{Error, Result};
pub use gain::{build_gain_graph, gain, similarity, ClientResidual, GainEdge, GainGraph, RoundWindows};
pub use netmodel::{generate_scenario, Scenario, ScenarioConfig, SensingMode};
pub use policies::{
    audit_trace, exhaustive_optimal, run_episode, Episode, EpisodeTrace, MatchDecision, Policy, RoundObservation,
};
pub use scalar::Scalar;
pub use urp::{Claim, GridKind, PoolSpec, Process, UniversalResourcePool};
pub use workload::{oracle_workload, solve_workload, SensingSpec, WorkloadProblem, WorkloadSolution};
pub use zeros::{plan_pipeline, validate_cstc, GaiRoundSchedule, ScheduleMode};

pub type Scenario64 = Scenario<f64>;
pub type Scenario32 = Scenario<f32>;
pub type ScenarioConfig64 = ScenarioConfig<f64>;
pub type ScenarioConfig32 = ScenarioConfig<f32>;
pub type Pool64 = UniversalResourcePool<f64>;
pub type Pool32 = UniversalResourcePool<f32>;
pub type Problem64 = WorkloadProblem<f64>;
pub type Problem32 = WorkloadProblem<f32>;
pub type Trace64 = EpisodeTrace<f64>;
pub type Trace32 = EpisodeTrace<f32>;
