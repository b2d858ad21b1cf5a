use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MatchDecision, Policy};
use crate::error::{Error, Result};
use crate::gain::{build_gain_graph, gain, similarity, workload_problem, ClientResidual, GainGraph, RoundWindows};
use crate::netmodel::Scenario;
use crate::scalar::Scalar;
use crate::urp::{Claim, ClaimTag, GridKind, PoolSpec, Process, UniversalResourcePool};
use crate::workload::{solve_workload, SensingSpec, WorkloadProblem, WorkloadSolution};
use crate::zeros::{validate_cstc, CstcViolation, GaiRoundSchedule, ScheduleMode};

/// Everything a policy may look at when matching round `round`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundObservation<T> {
    pub round: usize,
    pub windows: RoundWindows<T>,
    pub residuals: Vec<ClientResidual<T>>,
    /// Sensed targets per client.
    pub sensed: Vec<usize>,
    /// Row-major over (client, model).
    pub problems: Vec<WorkloadProblem<T>>,
    pub graph: GainGraph<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord<T> {
    pub gr: usize,
    pub client: usize,
    pub model: usize,
    pub workload: u64,
    pub gain: T,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord<T> {
    pub gr: usize,
    pub decision: MatchDecision,
    pub pairs: Vec<PairRecord<T>>,
    pub gain: T,
    pub cstc_ok: bool,
}

/// Pool occupancy at the close of a communication round, averaged over clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrSnapshot<T> {
    pub cr: usize,
    pub freq_utilization: T,
    pub comp_utilization: T,
    pub within_capacity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace<T> {
    pub mode: ScheduleMode,
    pub num_rounds: usize,
    pub cr_length: usize,
    pub n_clients: usize,
    pub pool_spec: PoolSpec<T>,
    pub rounds: Vec<RoundRecord<T>>,
    /// Every claim in pool insertion order.
    pub claims: Vec<Claim<T>>,
    pub snapshots: Vec<CrSnapshot<T>>,
    pub cstc_violations: Vec<CstcViolation>,
    pub cumulative_gain: T,
}

impl<T: Scalar> EpisodeTrace<T> {
    pub fn mean_utilization(&self) -> (T, T) {
        if self.snapshots.is_empty() {
            return (T::zero(), T::zero());
        }
        let k = T::from_usize_lossy(self.snapshots.len());
        (
            self.snapshots.iter().map(|s| s.freq_utilization).sum::<T>() / k,
            self.snapshots.iter().map(|s| s.comp_utilization).sum::<T>() / k,
        )
    }

    pub fn round_gains(&self) -> Vec<T> {
        self.rounds.iter().map(|r| r.gain).collect()
    }

    pub fn decisions(&self) -> Vec<MatchDecision> {
        self.rounds.iter().map(|r| r.decision.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T> {
    /// Summed gain of every client for the round just decided.
    pub reward: T,
    pub done: bool,
}

fn ceil_slots<T: Scalar>(t: T, dt: T, horizon: usize) -> usize {
    let n = (t / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(horizon);
    n.clamp(1, horizon)
}

/// Turns a workload solution into claims: generation claims go into
/// `gen_pool`, consumption claims into `cons_pool`. Downlink, training and
/// uplink run back-to-back from the start of the consumption window.
/// Neither pool changes on failure.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub(crate) fn realize_solution<T: Scalar>(
    problem: &WorkloadProblem<T>,
    sol: &WorkloadSolution<T>,
    client_id: usize,
    gr: usize,
    gen_cr: usize,
    cons_cr: usize,
    gen_pool: &mut UniversalResourcePool<T>,
    cons_pool: &mut UniversalResourcePool<T>,
) -> Result<(Vec<Claim<T>>, Vec<Claim<T>>)> {
    let tag = |cr_index, process| ClaimTag {
        client_id,
        gr_index: gr,
        cr_index,
        process,
    };
    let lat = &sol.latencies;
    let gen_backup = gen_pool.clone();
    let gen = match problem.sensing {
        SensingSpec::Vs { .. } => {
            let n = ceil_slots(lat.t_sens, gen_pool.slot_duration, gen_pool.num_slots());
            let c = tag(gen_cr, Process::Sens).time_only(0..n);
            gen_pool.try_allocate(c.clone())?;
            vec![c]
        }
        SensingSpec::Ws { .. } => gen_pool.fill(
            tag(gen_cr, Process::Sens),
            GridKind::TimeFreq,
            0..gen_pool.num_slots(),
            sol.b_sens * lat.t_sens,
        )?,
    };

    let cons_backup = cons_pool.clone();
    let mut cons = Vec::new();
    let t1 = lat.t_dl;
    let t2 = t1 + lat.t_cp;
    let t3 = t2 + lat.t_ul;
    let phases = [
        (Process::CommDl, GridKind::TimeFreq, T::zero(), t1, sol.b_comm),
        (Process::Comp, GridKind::TimeComp, t1, t2, sol.f),
        (Process::CommUl, GridKind::TimeFreq, t2, t3, sol.b_comm),
    ];
    for (process, grid, start, end, rate) in phases {
        match cons_pool.fill_rate(tag(cons_cr, process), grid, start, end, rate) {
            Ok(mut c) => cons.append(&mut c),
            Err(e) => {
                *gen_pool = gen_backup;
                *cons_pool = cons_backup;
                return Err(e);
            }
        }
    }
    Ok((gen, cons))
}

/// Step-wise episode: one decision per round, pools advancing one
/// communication round at a time.
#[derive(Clone, Debug)]
pub struct Episode<T: Scalar> {
    scenario: Scenario<T>,
    schedule: GaiRoundSchedule,
    next_round: usize,
    current_cr: usize,
    pending: Vec<Vec<Claim<T>>>,
    obs: Option<RoundObservation<T>>,
    trace: EpisodeTrace<T>,
    finished: bool,
}

impl<T: Scalar> Episode<T> {
    pub fn new(scenario: Scenario<T>, schedule: GaiRoundSchedule) -> Result<Self> {
        if schedule.cr_length != scenario.pool_spec.num_slots {
            return Err(Error::Config(format!(
                "schedule uses {}-slot rounds but pools hold {} slots",
                schedule.cr_length, scenario.pool_spec.num_slots
            )));
        }
        let n = scenario.n_clients();
        let trace = EpisodeTrace {
            mode: schedule.mode,
            num_rounds: schedule.num_rounds,
            cr_length: schedule.cr_length,
            n_clients: n,
            pool_spec: scenario.pool_spec.clone(),
            rounds: Vec::new(),
            claims: Vec::new(),
            snapshots: Vec::new(),
            cstc_violations: Vec::new(),
            cumulative_gain: T::zero(),
        };
        Ok(Self {
            scenario,
            schedule,
            next_round: 1,
            current_cr: 1,
            pending: vec![Vec::new(); n],
            obs: None,
            trace,
            finished: false,
        })
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn schedule(&self) -> &GaiRoundSchedule {
        &self.schedule
    }

    /// 1-based index of the round awaiting a decision.
    pub fn round(&self) -> usize {
        self.next_round
    }

    pub fn is_done(&self) -> bool {
        self.finished
    }

    pub fn trace(&self) -> &EpisodeTrace<T> {
        &self.trace
    }

    pub fn into_trace(self) -> EpisodeTrace<T> {
        self.trace
    }

    fn windows(&self) -> RoundWindows<T> {
        let t = self.scenario.pool_spec.window();
        RoundWindows {
            t_gen: t,
            t_cons: t,
            coupled: self.schedule.mode == ScheduleMode::Zeros,
        }
    }

    fn build_observation(&self) -> Result<RoundObservation<T>> {
        let s = &self.scenario;
        let windows = self.windows();
        let residuals: Vec<_> = s.clients.iter().map(|c| ClientResidual::from_pool(&c.pool)).collect();
        let sensed: Vec<usize> = (0..s.n_clients()).map(|n| s.sense_targets(n).iter().sum()).collect();
        let problems = (0..s.n_clients())
            .flat_map(|n| (0..s.n_models()).map(move |m| (n, m)))
            .map(|(n, m)| workload_problem(s, n, m, &windows, &residuals[n], sensed[n]))
            .collect();
        let graph = build_gain_graph(s, &windows, &residuals)?;
        Ok(RoundObservation {
            round: self.next_round,
            windows,
            residuals,
            sensed,
            problems,
            graph,
        })
    }

    /// Observation for the current round (computed once per round).
    pub fn observe(&mut self) -> Result<&RoundObservation<T>> {
        if self.obs.is_none() {
            self.obs = Some(self.build_observation()?);
        }
        Ok(self.obs.as_ref().expect("just filled"))
    }

    /// The observation cached by the last [`Episode::observe`], if any.
    pub fn observation(&self) -> Option<&RoundObservation<T>> {
        self.obs.as_ref()
    }

    fn fresh_pool(&self) -> UniversalResourcePool<T> {
        UniversalResourcePool::from_spec(&self.scenario.pool_spec).expect("spec validated at scenario construction")
    }

    pub fn step(&mut self, decision: &MatchDecision) -> Result<StepOutcome<T>> {
        if self.finished {
            return Err(Error::InvalidDecision("episode already finished".into()));
        }
        let n_clients = self.scenario.n_clients();
        let n_models = self.scenario.n_models();
        if !decision.is_complete(n_clients, n_models) {
            return Err(Error::InvalidDecision(format!(
                "expected {n_clients} model indices below {n_models}, got {:?}",
                decision.assignment
            )));
        }
        let obs = match self.obs.take() {
            Some(o) => o,
            None => self.build_observation()?,
        };
        let gr = self.next_round;
        let plan = *self.schedule.round(gr).expect("round within schedule");

        let mut pairs = Vec::with_capacity(n_clients);
        let mut reward = T::zero();
        for (n, &m) in decision.assignment.iter().enumerate() {
            let problem = obs.problems[n * n_models + m];
            let sol = solve_workload(&problem)?;
            let s = similarity(
                &self.scenario.clients[n].local_dist,
                &self.scenario.edges[m].domain_dist,
            )?;
            let mut workload = sol.w_star;
            let mut feasible = sol.feasible;
            if workload > 0 {
                let mut cons_pool = self.fresh_pool();
                let client_id = self.scenario.clients[n].id;
                let gen_pool = &mut self.scenario.clients[n].pool;
                match realize_solution(
                    &problem,
                    &sol,
                    client_id,
                    gr,
                    plan.gen.cr,
                    plan.cons.cr,
                    gen_pool,
                    &mut cons_pool,
                ) {
                    Ok((gen, cons)) => {
                        self.trace.claims.extend(gen);
                        self.pending[n] = cons;
                    }
                    Err(_) => {
                        workload = 0;
                        feasible = false;
                    }
                }
            }
            let g = gain(s, T::lit(workload as f64));
            reward += g;
            pairs.push(PairRecord {
                gr,
                client: n,
                model: m,
                workload,
                gain: g,
                feasible,
            });
        }
        self.trace.rounds.push(RoundRecord {
            gr,
            decision: decision.clone(),
            pairs,
            gain: reward,
            cstc_ok: true,
        });
        self.trace.cumulative_gain += reward;

        match self.schedule.mode {
            ScheduleMode::Zeros => {
                self.advance_cr();
                self.place_pending()?;
            }
            ScheduleMode::Serial => {
                self.advance_cr();
                self.place_pending()?;
                self.advance_cr();
            }
        }
        self.next_round += 1;
        let done = self.next_round > self.schedule.num_rounds;
        if done {
            if self.schedule.mode == ScheduleMode::Zeros {
                self.advance_cr();
            }
            self.finish();
        }
        Ok(StepOutcome { reward, done })
    }

    fn place_pending(&mut self) -> Result<()> {
        for (n, claims) in self.pending.iter_mut().enumerate() {
            for c in claims.drain(..) {
                self.scenario.clients[n].pool.try_allocate(c.clone())?;
                self.trace.claims.push(c);
            }
        }
        Ok(())
    }

    /// Closes the current communication round: records occupancy, releases
    /// every round's claims, moves clients and re-senses.
    fn advance_cr(&mut self) {
        let n = T::from_usize_lossy(self.scenario.n_clients().max(1));
        let (mut fu, mut cu, mut ok) = (T::zero(), T::zero(), true);
        for c in &self.scenario.clients {
            let (f, u) = c.pool.utilization();
            fu += f;
            cu += u;
            ok &= c.pool.within_capacity();
        }
        self.trace.snapshots.push(CrSnapshot {
            cr: self.current_cr,
            freq_utilization: fu / n,
            comp_utilization: cu / n,
            within_capacity: ok,
        });
        for c in &mut self.scenario.clients {
            let mut rounds: Vec<usize> = c.pool.claims.iter().map(|c| c.gr_index).collect();
            rounds.sort_unstable();
            rounds.dedup();
            for gr in rounds {
                c.pool.release_round(gr);
            }
            debug_assert!(c.pool.claims.is_empty());
        }
        let cr_time = self.scenario.pool_spec.window();
        self.scenario.step_mobility(cr_time);
        self.scenario.refresh_local_distributions();
        self.current_cr += 1;
    }

    fn finish(&mut self) {
        let violations = validate_cstc(&self.schedule, &self.trace.claims);
        for r in &mut self.trace.rounds {
            r.cstc_ok = !violations.iter().any(|v| v.gr == r.gr);
        }
        self.trace.cstc_violations = violations;
        self.finished = true;
    }
}

pub fn run_episode<T: Scalar>(
    scenario: &Scenario<T>,
    policy: &dyn Policy<T>,
    schedule: &GaiRoundSchedule,
) -> Result<EpisodeTrace<T>> {
    let mut ep = Episode::new(scenario.clone(), schedule.clone())?;
    while !ep.is_done() {
        ep.observe()?;
        let decision = policy.decide(&ep.scenario, ep.observation().expect("observation built above"));
        ep.step(&decision)?;
    }
    Ok(ep.into_trace())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationAudit {
    pub pools_checked: usize,
    /// Claims the replay had to reject for lack of capacity.
    pub rejected_claims: usize,
    /// Pools whose state after a release differed from a replay without the released round.
    pub release_mismatches: usize,
}

impl ConservationAudit {
    pub fn ok(&self) -> bool {
        self.rejected_claims == 0 && self.release_mismatches == 0
    }

    pub fn merge(&mut self, other: &ConservationAudit) {
        self.pools_checked += other.pools_checked;
        self.rejected_claims += other.rejected_claims;
        self.release_mismatches += other.release_mismatches;
    }
}

/// Replays a trace pool by pool: every claim must fit, and releasing rounds
/// one at a time must leave exactly the state a replay of the survivors gives.
pub fn audit_trace<T: Scalar>(trace: &EpisodeTrace<T>) -> ConservationAudit {
    let mut by_pool: BTreeMap<(usize, usize), Vec<&Claim<T>>> = BTreeMap::new();
    for c in &trace.claims {
        by_pool.entry((c.client_id, c.cr_index)).or_default().push(c);
    }
    let fresh = || UniversalResourcePool::from_spec(&trace.pool_spec).expect("valid pool spec in trace");
    let replay = |claims: &[&Claim<T>], keep: &dyn Fn(usize) -> bool| {
        let mut pool = fresh();
        let mut rejected = 0;
        for c in claims.iter().filter(|c| keep(c.gr_index)) {
            if pool.try_allocate((*c).clone()).is_err() {
                rejected += 1;
            }
        }
        (pool, rejected)
    };

    let mut audit = ConservationAudit::default();
    for claims in by_pool.values() {
        audit.pools_checked += 1;
        let (mut pool, rejected) = replay(claims, &|_| true);
        audit.rejected_claims += rejected;
        if !pool.within_capacity() {
            audit.rejected_claims += 1;
        }
        let mut rounds: Vec<usize> = claims.iter().map(|c| c.gr_index).collect();
        rounds.sort_unstable();
        rounds.dedup();
        for (i, &gr) in rounds.iter().enumerate() {
            pool.release_round(gr);
            let released = &rounds[..=i];
            let (expected, _) = replay(claims, &|g| !released.contains(&g));
            if pool != expected {
                audit.release_mismatches += 1;
            }
        }
        if pool
            .time_freq
            .used
            .iter()
            .chain(&pool.time_comp.used)
            .any(|&u| u != T::zero())
        {
            audit.release_mismatches += 1;
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{generate_scenario, ScenarioConfig};
    use crate::policies::{GreedyGain, RandomPolicy};
    use crate::zeros::plan_pipeline;
    use proptest::prelude::*;

    fn small(seed: u64) -> Scenario<f64> {
        let cfg = ScenarioConfig::<f64> {
            n_clients: 8,
            n_targets: 30,
            ..Default::default()
        };
        generate_scenario(&cfg, seed).unwrap()
    }

    #[test]
    fn zero_targets_zero_gain() {
        let cfg = ScenarioConfig::<f64> {
            n_clients: 4,
            n_targets: 0,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 2).unwrap();
        let sched = plan_pipeline(5, 9, ScheduleMode::Zeros).unwrap();
        let t = run_episode(&s, &GreedyGain, &sched).unwrap();
        assert_eq!(t.cumulative_gain, 0.0);
        assert!(t.claims.is_empty());
    }

    #[test]
    fn greedy_is_deterministic() {
        let s = small(4);
        let sched = plan_pipeline(5, 9, ScheduleMode::Zeros).unwrap();
        let a = run_episode(&s, &GreedyGain, &sched).unwrap();
        let b = run_episode(&s, &GreedyGain, &sched).unwrap();
        assert_eq!(a, b);
        assert!(a.cumulative_gain > 0.0);
    }

    #[test]
    fn trace_bookkeeping() {
        let s = small(9);
        for mode in [ScheduleMode::Zeros, ScheduleMode::Serial] {
            let sched = plan_pipeline(4, 9, mode).unwrap();
            let t = run_episode(&s, &RandomPolicy { seed: 3 }, &sched).unwrap();
            assert_eq!(t.rounds.len(), 4);
            assert_eq!(t.snapshots.len(), sched.total_crs());
            let total: f64 = t.rounds.iter().flat_map(|r| &r.pairs).map(|p| p.gain).sum();
            assert!((total - t.cumulative_gain).abs() < 1e-9);
            assert!(t.cstc_violations.is_empty(), "{:?}", t.cstc_violations);
            assert!(t.snapshots.iter().all(|s| s.within_capacity));
            assert!(audit_trace(&t).ok());
        }
    }

    #[test]
    fn overlapped_crs_touch_adjacent_rounds_only() {
        let s = small(6);
        let sched = plan_pipeline(5, 9, ScheduleMode::Zeros).unwrap();
        let t = run_episode(&s, &GreedyGain, &sched).unwrap();
        for c in &t.claims {
            assert!(c.gr_index == c.cr_index || c.gr_index + 1 == c.cr_index);
        }
        // some CR must actually host two rounds
        assert!(t.claims.iter().any(|a| t
            .claims
            .iter()
            .any(|b| a.cr_index == b.cr_index && a.gr_index != b.gr_index)));
    }

    #[test]
    fn rejects_malformed_decisions() {
        let s = small(1);
        let sched = plan_pipeline(1, 9, ScheduleMode::Zeros).unwrap();
        let mut ep = Episode::new(s, sched).unwrap();
        let bad = MatchDecision { assignment: vec![0; 3] };
        assert!(matches!(ep.step(&bad), Err(Error::InvalidDecision(_))));
        let bad = MatchDecision { assignment: vec![9; 8] };
        assert!(ep.step(&bad).is_err());
        let ok = MatchDecision { assignment: vec![0; 8] };
        assert!(ep.step(&ok).unwrap().done);
        assert!(ep.step(&ok).is_err());
    }

    #[test]
    fn mismatched_schedule_rejected() {
        let sched = plan_pipeline(2, 5, ScheduleMode::Zeros).unwrap();
        assert!(matches!(Episode::new(small(1), sched), Err(Error::Config(_))));
    }

    #[test]
    fn audit_flags_tampered_trace() {
        let s = small(3);
        let sched = plan_pipeline(3, 9, ScheduleMode::Zeros).unwrap();
        let mut t = run_episode(&s, &GreedyGain, &sched).unwrap();
        let victim = t.claims.iter_mut().find(|c| c.grid.is_some()).unwrap();
        victim.amount_per_cell = victim.amount_per_cell * 1e6 + 1e9;
        assert!(!audit_trace(&t).ok());
    }

    fn problem_strategy() -> impl Strategy<Value = (WorkloadProblem<f64>, PoolSpec<f64>)> {
        (
            (1usize..12, 1usize..6, 1usize..4, 0.02f64..0.2, 1e5f64..2e6, 1e7f64..5e8),
            (
                0.5f64..12.0,
                1e4f64..2e6,
                1e6f64..5e7,
                0.0f64..300.0,
                any::<bool>(),
                any::<bool>(),
            ),
            (0.0f64..=1.0, 0.0f64..=1.0),
        )
            .prop_map(
                |((slots, fl, cl, dt, hz, cyc), (eta, size, kappa, cap, ws, coupled), (bf, cf))| {
                    let spec = PoolSpec {
                        num_slots: slots,
                        freq_lanes: fl,
                        comp_lanes: cl,
                        slot_duration: dt,
                        hz_per_lane: hz,
                        cycles_per_lane_slot: cyc,
                    };
                    let p = WorkloadProblem {
                        t_gen: spec.window(),
                        t_cons: spec.window(),
                        bandwidth: spec.bandwidth() * bf,
                        compute: spec.compute_rate() * cf,
                        eta,
                        size_dl: size,
                        size_ul: size * 0.5,
                        cycles_per_sample: kappa,
                        sensing: if ws {
                            SensingSpec::Ws {
                                bits_per_sample: 2e4,
                                efficiency: 1.0,
                            }
                        } else {
                            SensingSpec::Vs { secs_per_sample: 0.004 }
                        },
                        w_cap: cap,
                        coupled,
                    };
                    (p, spec)
                },
            )
    }

    proptest! {
        /// A solution always fits a pool whose residuals are exactly the budgets it was solved against.
        #[test]
        fn solution_claims_fit((p, spec) in problem_strategy()) {
            let sol = solve_workload(&p).unwrap();
            prop_assume!(sol.w_star > 0);
            let full = UniversalResourcePool::from_spec(&spec).unwrap();
            // pre-load the generation pool so that its residual averages exactly `p.bandwidth`
            let mut gen_pool = full.clone();
            let taken = spec.bandwidth() * spec.window() - p.bandwidth * p.t_gen;
            if taken > 0.0 {
                gen_pool
                    .fill(
                        ClaimTag { client_id: 0, gr_index: 0, cr_index: 1, process: Process::CommUl },
                        GridKind::TimeFreq,
                        0..spec.num_slots,
                        taken,
                    )
                    .unwrap();
            }
            let mut cons_pool = full;
            let res = realize_solution(&p, &sol, 0, 1, 1, 2, &mut gen_pool, &mut cons_pool);
            prop_assert!(res.is_ok(), "{:?}", res);
            prop_assert!(gen_pool.within_capacity() && cons_pool.within_capacity());
        }
    }
}
