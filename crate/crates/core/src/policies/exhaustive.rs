use serde::{Deserialize, Serialize};

use super::{Episode, MatchDecision, Policy, RoundObservation};
use crate::error::{Error, Result};
use crate::netmodel::Scenario;
use crate::scalar::Scalar;
use crate::zeros::GaiRoundSchedule;

/// Largest number of decision sequences the exhaustive search will enumerate.
pub const EXHAUSTIVE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult<T> {
    pub decisions: Vec<MatchDecision>,
    pub gain: T,
    /// Sequences enumerated, `(M^N)^R`.
    pub sequences: u64,
}

/// Replays a fixed list of per-round decisions.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    pub decisions: Vec<MatchDecision>,
}

impl<T: Scalar> Policy<T> for ScriptedPolicy {
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(&self, scenario: &Scenario<T>, obs: &RoundObservation<T>) -> MatchDecision {
        self.decisions
            .get(obs.round - 1)
            .cloned()
            .unwrap_or_else(|| MatchDecision {
                assignment: vec![0; scenario.n_clients()],
            })
    }
}

fn decode(mut index: usize, n: usize, m: usize) -> MatchDecision {
    // client 0 is the most significant digit, so index order is lexicographic
    let mut assignment = vec![0; n];
    for slot in assignment.iter_mut().rev() {
        *slot = index % m;
        index /= m;
    }
    MatchDecision { assignment }
}

struct Search<T> {
    per_round: usize,
    n: usize,
    m: usize,
    best: Option<(T, Vec<MatchDecision>)>,
    path: Vec<MatchDecision>,
    visited: u64,
}

impl<T: Scalar> Search<T> {
    fn dfs(&mut self, ep: &Episode<T>) -> Result<()> {
        for i in 0..self.per_round {
            let d = decode(i, self.n, self.m);
            let mut next = ep.clone();
            let out = next.step(&d)?;
            self.path.push(d);
            if out.done {
                self.visited += 1;
                let g = next.trace().cumulative_gain;
                if self.best.as_ref().is_none_or(|(b, _)| g > *b) {
                    self.best = Some((g, self.path.clone()));
                }
            } else {
                self.dfs(&next)?;
            }
            self.path.pop();
        }
        Ok(())
    }
}

/// Enumerates every matching sequence and returns the best one. Ties go to
/// the lexicographically smallest sequence.
pub fn exhaustive_optimal<T: Scalar>(
    scenario: &Scenario<T>,
    schedule: &GaiRoundSchedule,
) -> Result<ExhaustiveResult<T>> {
    let n = scenario.n_clients();
    let m = scenario.n_models();
    let sequences = (m as f64).powf((n * schedule.num_rounds) as f64);
    if !(sequences <= EXHAUSTIVE_LIMIT) {
        return Err(Error::InstanceTooLarge {
            sequences,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let ep = Episode::new(scenario.clone(), schedule.clone())?;
    let mut search = Search {
        per_round: m.pow(n as u32),
        n,
        m,
        best: None,
        path: Vec::new(),
        visited: 0,
    };
    search.dfs(&ep)?;
    let (gain, decisions) = search
        .best
        .ok_or_else(|| Error::InvalidProblem("instance has no clients or models".into()))?;
    Ok(ExhaustiveResult {
        decisions,
        gain,
        sequences: search.visited,
    })
}
