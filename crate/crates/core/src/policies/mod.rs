//! Matching policies and the episode machinery they drive.
//!
//! A policy sees one round's observation (residual pools, the gain graph and
//! the per-pair workload programs) and maps every client to one edge model.
//! Model indices are zero-based. Ties always go to the lowest index.

mod episode;
mod exhaustive;

pub use episode::{
    audit_trace, run_episode, ConservationAudit, CrSnapshot, Episode, EpisodeTrace, PairRecord, RoundObservation,
    RoundRecord, StepOutcome,
};
pub use exhaustive::{exhaustive_optimal, ExhaustiveResult, ScriptedPolicy, EXHAUSTIVE_LIMIT};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gain::GainGraph;
use crate::netmodel::Scenario;
use crate::scalar::Scalar;
use crate::workload::{latency_components, SensingSpec, WorkloadProblem};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchDecision {
    /// Model index chosen by each client.
    pub assignment: Vec<usize>,
}

impl MatchDecision {
    pub fn is_complete(&self, n_clients: usize, n_models: usize) -> bool {
        self.assignment.len() == n_clients && self.assignment.iter().all(|&m| m < n_models)
    }
}

pub trait Policy<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn decide(&self, scenario: &Scenario<T>, obs: &RoundObservation<T>) -> MatchDecision;
}

fn argmax_lowest<T: Scalar>(scores: impl IntoIterator<Item = T>) -> usize {
    let mut best = (0, T::neg_infinity());
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

fn argmin_lowest<T: Scalar>(scores: impl IntoIterator<Item = T>) -> usize {
    argmax_lowest(scores.into_iter().map(|s| -s))
}

/// Each client independently takes its heaviest edge.
pub fn greedy_gain_policy<T: Scalar>(graph: &GainGraph<T>) -> MatchDecision {
    MatchDecision {
        assignment: (0..graph.n_clients())
            .map(|n| argmax_lowest(graph.client_weights(n).iter().map(|e| e.weight)))
            .collect(),
    }
}

/// Which latency terms a minimum-latency baseline adds up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencyObjective {
    /// Downlink + uplink.
    Comm,
    /// Communication + computing.
    CommComp,
    /// Sensing + communication + computing.
    SensCommComp,
}

/// Minimum-latency matching at each pair's full nominal load `W = W_cap`.
pub fn min_latency_policy<T: Scalar>(
    problems: &[WorkloadProblem<T>],
    n_models: usize,
    objective: LatencyObjective,
) -> MatchDecision {
    let assignment = problems
        .chunks(n_models)
        .map(|row| {
            argmin_lowest(row.iter().map(|p| {
                let l = latency_components(p, p.w_cap);
                match objective {
                    LatencyObjective::Comm => l.t_dl + l.t_ul,
                    LatencyObjective::CommComp => l.t_dl + l.t_ul + l.t_cp,
                    LatencyObjective::SensCommComp => l.t_sens + l.t_dl + l.t_ul + l.t_cp,
                }
            }))
        })
        .collect();
    MatchDecision { assignment }
}

/// Per-round sensing capacity of the pair's program, in samples.
fn sensing_capacity<T: Scalar>(p: &WorkloadProblem<T>) -> T {
    match p.sensing {
        SensingSpec::Vs { secs_per_sample } => p.t_gen / secs_per_sample,
        SensingSpec::Ws {
            bits_per_sample,
            efficiency,
        } => p.bandwidth * efficiency * p.t_gen / bits_per_sample,
    }
}

/// Maximises sensed targets × sensing capacity. Neither factor depends on the
/// edge, so every client falls to the tie rule.
pub fn mp_tsc_policy<T: Scalar>(problems: &[WorkloadProblem<T>], sensed: &[usize], n_models: usize) -> MatchDecision {
    let assignment = problems
        .chunks(n_models)
        .zip(sensed)
        .map(|(row, &count)| argmax_lowest(row.iter().map(|p| T::from_usize_lossy(count) * sensing_capacity(p))))
        .collect();
    MatchDecision { assignment }
}

#[derive(Clone, Debug, Default)]
pub struct GreedyGain;

impl<T: Scalar> Policy<T> for GreedyGain {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&self, _: &Scenario<T>, obs: &RoundObservation<T>) -> MatchDecision {
        greedy_gain_policy(&obs.graph)
    }
}

#[derive(Clone, Debug)]
pub struct MinLatency(pub LatencyObjective);

impl<T: Scalar> Policy<T> for MinLatency {
    fn name(&self) -> &str {
        match self.0 {
            LatencyObjective::Comm => "ml-c",
            LatencyObjective::CommComp => "ml-cc",
            LatencyObjective::SensCommComp => "ml-scc",
        }
    }

    fn decide(&self, scenario: &Scenario<T>, obs: &RoundObservation<T>) -> MatchDecision {
        min_latency_policy(&obs.problems, scenario.n_models(), self.0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MaxSensing;

impl<T: Scalar> Policy<T> for MaxSensing {
    fn name(&self) -> &str {
        "mp-tsc"
    }

    fn decide(&self, scenario: &Scenario<T>, obs: &RoundObservation<T>) -> MatchDecision {
        mp_tsc_policy(&obs.problems, &obs.sensed, scenario.n_models())
    }
}

/// Uniform random matching. The stream is derived from the policy seed, the
/// scenario seed and the round, so `decide` stays a pure function.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    pub seed: u64,
}

impl<T: Scalar> Policy<T> for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&self, scenario: &Scenario<T>, obs: &RoundObservation<T>) -> MatchDecision {
        let stream =
            self.seed ^ scenario.rng_seed.rotate_left(21) ^ (obs.round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        MatchDecision {
            assignment: (0..scenario.n_clients())
                .map(|_| rng.gen_range(0..scenario.n_models()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::{ClientVertex, GainEdge};

    fn graph(weights: &[&[f64]]) -> GainGraph<f64> {
        let m = weights[0].len();
        GainGraph {
            client_vertices: (0..weights.len())
                .map(|n| ClientVertex {
                    client_id: n,
                    features: vec![],
                })
                .collect(),
            model_vertices: (0..m).collect(),
            edges: weights
                .iter()
                .enumerate()
                .flat_map(|(n, row)| {
                    row.iter().enumerate().map(move |(mi, &w)| GainEdge {
                        client_id: n,
                        model_id: mi,
                        weight: w,
                        workload: 1,
                        similarity: 1.0,
                        feasible: true,
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn greedy_argmax_and_ties() {
        assert_eq!(greedy_gain_policy(&graph(&[&[0.2, 0.7]])).assignment, vec![1]);
        assert_eq!(greedy_gain_policy(&graph(&[&[0.5, 0.5]])).assignment, vec![0]);
        let g = graph(&[&[0.1, 0.4, 0.3], &[0.9, 0.2, 0.9]]);
        let mut scaled = g.clone();
        scaled.edges.iter_mut().for_each(|e| e.weight *= 7.5);
        assert_eq!(greedy_gain_policy(&g), greedy_gain_policy(&scaled));
        assert_eq!(greedy_gain_policy(&g).assignment, vec![1, 0]);
    }

    fn problem(eta: f64, kappa: f64, sensing: SensingSpec<f64>) -> WorkloadProblem<f64> {
        WorkloadProblem {
            t_gen: 0.9,
            t_cons: 0.9,
            bandwidth: 4e6,
            compute: 2e9,
            eta,
            size_dl: 2e6,
            size_ul: 2e6,
            cycles_per_sample: kappa,
            sensing,
            w_cap: 40.0,
            coupled: false,
        }
    }

    #[test]
    fn latency_baselines() {
        let vs = SensingSpec::Vs { secs_per_sample: 0.005 };
        // client nearer edge 0 (higher η), same κ
        let row = [problem(6.0, 1e7, vs), problem(3.0, 1e7, vs)];
        for obj in [
            LatencyObjective::Comm,
            LatencyObjective::CommComp,
            LatencyObjective::SensCommComp,
        ] {
            assert_eq!(min_latency_policy(&row, 2, obj).assignment, vec![0]);
        }
        // heavier compute on the near edge flips ML-CC but not ML-C
        let row = [problem(6.0, 5e7, vs), problem(5.0, 1e7, vs)];
        assert_eq!(min_latency_policy(&row, 2, LatencyObjective::Comm).assignment, vec![0]);
        assert_eq!(
            min_latency_policy(&row, 2, LatencyObjective::CommComp).assignment,
            vec![1]
        );
        assert_eq!(
            min_latency_policy(&row, 2, LatencyObjective::SensCommComp).assignment,
            min_latency_policy(&row, 2, LatencyObjective::CommComp).assignment
        );
    }

    #[test]
    fn mp_tsc_is_matching_blind() {
        let vs = SensingSpec::Vs { secs_per_sample: 0.005 };
        let row = [problem(3.0, 1e7, vs), problem(6.0, 1e7, vs)];
        assert_eq!(mp_tsc_policy(&row, &[5], 2).assignment, vec![0]);
        assert_eq!(mp_tsc_policy(&row, &[0], 2).assignment, vec![0]);
        let slow = SensingSpec::Vs { secs_per_sample: 0.01 };
        let row2 = [problem(3.0, 1e7, slow), problem(6.0, 1e7, slow)];
        assert_eq!(mp_tsc_policy(&row2, &[5], 2), mp_tsc_policy(&row, &[5], 2));
    }
}
