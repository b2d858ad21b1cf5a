use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{actor_forward, greedy, Losses, SacAgent, SacConfig};
use super::encode::{encode_state, Normalization};
use super::mlp::Mlp;
use super::replay::{ReplayBuffer, Transition};
use crate::error::Result;
use crate::netmodel::{generate_scenario, Scenario, ScenarioConfig};
use crate::policies::{run_episode, Episode, EpisodeTrace, MatchDecision, Policy, RoundObservation};
use crate::zeros::GaiRoundSchedule;

/// Greedy (argmax) execution of a trained actor.
#[derive(Clone, Debug, PartialEq)]
pub struct SacPolicy {
    pub actor: Mlp<f64>,
    pub norm: Normalization,
}

impl SacPolicy {
    pub fn probabilities(&self, scenario: &Scenario<f64>, obs: &RoundObservation<f64>) -> Result<Vec<Vec<f64>>> {
        let x = encode_state(scenario, &obs.residuals, &obs.graph, &self.norm)?;
        Ok(actor_forward(&self.actor, &x, self.norm.n_clients, self.norm.n_models))
    }
}

impl Policy<f64> for SacPolicy {
    fn name(&self) -> &str {
        "sac"
    }

    fn decide(&self, scenario: &Scenario<f64>, obs: &RoundObservation<f64>) -> MatchDecision {
        let p = self
            .probabilities(scenario, obs)
            .expect("policy was trained for a different number of clients or models");
        MatchDecision { assignment: greedy(&p) }
    }
}

/// An episode seen through the learner's encoding.
pub struct MatchingEnv {
    episode: Episode<f64>,
    norm: Normalization,
    state: Vec<f64>,
}

impl MatchingEnv {
    pub fn new(scenario: Scenario<f64>, schedule: GaiRoundSchedule, norm: Normalization) -> Result<Self> {
        let mut env = Self {
            episode: Episode::new(scenario, schedule)?,
            norm,
            state: Vec::new(),
        };
        env.state = env.encode()?;
        Ok(env)
    }

    fn encode(&mut self) -> Result<Vec<f64>> {
        self.episode.observe()?;
        let obs = self.episode.observation().expect("just observed");
        encode_state(self.episode.scenario(), &obs.residuals, &obs.graph, &self.norm)
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.episode.is_done()
    }

    pub fn trace(&self) -> &EpisodeTrace<f64> {
        self.episode.trace()
    }

    pub fn step(&mut self, action: Vec<usize>) -> Result<Transition> {
        let out = self.episode.step(&MatchDecision {
            assignment: action.clone(),
        })?;
        let next_state = if out.done {
            vec![0.0; self.state.len()]
        } else {
            self.encode()?
        };
        let state = std::mem::replace(&mut self.state, next_state.clone());
        Ok(Transition {
            state,
            action,
            reward: out.reward,
            next_state,
            done: out.done,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    /// Environment-step budget; only whole episodes are run.
    pub total_steps: usize,
    /// Greedy evaluation period in episodes (0: final evaluation only).
    pub eval_every: usize,
    /// Draw a fresh scenario per episode (seeded `scenario_seed + episode`)
    /// instead of replaying the evaluation scenario.
    pub vary_scenario: bool,
    pub scenario_seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            total_steps: 20_000,
            eval_every: 100,
            vary_scenario: true,
            scenario_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub steps: usize,
    /// Gain collected by the exploring policy in this episode.
    pub cumulative_gain: f64,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub alpha: f64,
    /// Greedy-policy gain on the evaluation scenario.
    pub eval_gain: Option<f64>,
}

pub struct TrainOutcome {
    pub policy: SacPolicy,
    pub agent: SacAgent,
    pub curve: Vec<CurvePoint>,
    /// Greedy gain of the returned policy on the evaluation scenario.
    pub final_eval_gain: f64,
    pub steps: usize,
}

pub fn evaluate(policy: &SacPolicy, scenario: &Scenario<f64>, schedule: &GaiRoundSchedule) -> Result<f64> {
    Ok(run_episode(scenario, policy, schedule)?.cumulative_gain)
}

pub fn train(
    scenario_config: &ScenarioConfig<f64>,
    schedule: &GaiRoundSchedule,
    sac: &SacConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let eval_scenario = generate_scenario(scenario_config, opts.scenario_seed)?;
    let norm = Normalization::for_scenario(&eval_scenario);
    let mut agent = SacAgent::new(sac.clone(), norm.n_clients, norm.n_models, norm.state_len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(sac.seed ^ 0x5AC0_0000_0000_0001);
    let mut buffer = ReplayBuffer::new(sac.replay_capacity);
    let snapshot = |agent: &SacAgent| SacPolicy {
        actor: agent.actor.clone(),
        norm: norm.clone(),
    };

    let r = schedule.num_rounds;
    let mut curve = Vec::new();
    let mut steps = 0;
    let mut episode = 0;
    while steps + r <= opts.total_steps {
        let scenario = if opts.vary_scenario {
            generate_scenario(scenario_config, opts.scenario_seed.wrapping_add(episode as u64))?
        } else {
            eval_scenario.clone()
        };
        let mut env = MatchingEnv::new(scenario, schedule.clone(), norm.clone())?;
        let mut last: Option<Losses> = None;
        while !env.is_done() {
            let action = if steps < sac.warmup_steps {
                (0..norm.n_clients).map(|_| rng.gen_range(0..norm.n_models)).collect()
            } else {
                agent.sample_action(env.state(), &mut rng)
            };
            buffer.push(env.step(action)?);
            steps += 1;
            if steps >= sac.warmup_steps && buffer.len() >= sac.batch_size {
                for _ in 0..sac.updates_per_step {
                    let batch = buffer.sample(sac.batch_size, &mut rng);
                    last = Some(agent.update(&batch)?);
                }
            }
        }
        episode += 1;
        let eval_gain = if opts.eval_every > 0 && episode % opts.eval_every == 0 {
            Some(evaluate(&snapshot(&agent), &eval_scenario, schedule)?)
        } else {
            None
        };
        curve.push(CurvePoint {
            episode,
            steps,
            cumulative_gain: env.trace().cumulative_gain,
            actor_loss: last.map(|l| l.actor),
            critic_loss: last.map(|l| l.critic),
            alpha: agent.alpha(),
            eval_gain,
        });
    }

    let policy = snapshot(&agent);
    let final_eval_gain = evaluate(&policy, &eval_scenario, schedule)?;
    match curve.last_mut() {
        Some(p) => p.eval_gain = Some(final_eval_gain),
        None => curve.push(CurvePoint {
            episode: 0,
            steps: 0,
            cumulative_gain: 0.0,
            actor_loss: None,
            critic_loss: None,
            alpha: agent.alpha(),
            eval_gain: Some(final_eval_gain),
        }),
    }
    Ok(TrainOutcome {
        policy,
        agent,
        curve,
        final_eval_gain,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zeros::{plan_pipeline, ScheduleMode};

    #[test]
    fn zero_steps_returns_uniform_policy() {
        let cfg = ScenarioConfig::<f64>::tiny();
        let sched = plan_pipeline(3, 9, ScheduleMode::Zeros).unwrap();
        let out = train(
            &cfg,
            &sched,
            &SacConfig::default(),
            &TrainOptions {
                total_steps: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let init = SacAgent::new(SacConfig::default(), 3, 2, out.policy.norm.state_len()).unwrap();
        assert_eq!(out.policy.actor, init.actor);
        assert_eq!(out.curve.len(), 1);
        // uniform probabilities break ties to model 0 everywhere
        let s = generate_scenario(&cfg, 0).unwrap();
        let t = run_episode(&s, &out.policy, &sched).unwrap();
        assert!(t.rounds.iter().all(|r| r.decision.assignment == vec![0; 3]));
    }

    #[test]
    fn transition_reward_matches_trace() {
        let cfg = ScenarioConfig::<f64>::tiny();
        let s = generate_scenario(&cfg, 3).unwrap();
        let norm = Normalization::for_scenario(&s);
        let sched = plan_pipeline(3, 9, ScheduleMode::Zeros).unwrap();
        let mut env = MatchingEnv::new(s, sched, norm).unwrap();
        let mut rewards = Vec::new();
        for a in [vec![0, 1, 0], vec![1, 1, 1], vec![0, 0, 1]] {
            let t = env.step(a).unwrap();
            assert_eq!(t.state.len(), t.next_state.len());
            rewards.push(t.reward);
        }
        assert!(env.is_done());
        assert_eq!(rewards, env.trace().round_gains());
    }

    #[test]
    fn short_training_is_deterministic() {
        let cfg = ScenarioConfig::<f64>::tiny();
        let sched = plan_pipeline(3, 9, ScheduleMode::Zeros).unwrap();
        let sac = SacConfig {
            warmup_steps: 30,
            batch_size: 16,
            ..Default::default()
        };
        let opts = TrainOptions {
            total_steps: 90,
            eval_every: 10,
            vary_scenario: true,
            scenario_seed: 4,
        };
        let a = train(&cfg, &sched, &sac, &opts).unwrap();
        let b = train(&cfg, &sched, &sac, &opts).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.steps, 90);
        assert_eq!(a.curve.last().unwrap().eval_gain, Some(a.final_eval_gain));
        assert!(a.curve.iter().any(|p| p.actor_loss.is_some()));
    }
}
