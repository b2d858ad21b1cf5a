//! Discrete soft actor-critic over per-client model choices.
//!
//! One actor is shared by all clients. Each client's input row is its own
//! feature block and edge weights followed by the mean of those over all
//! clients. The twin critics see the whole state and emit one Q-value per
//! (client, model); every head regresses on the team reward.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp, MlpGrads};
use super::replay::Batch;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Target entropy as a fraction of `ln M`.
    pub target_entropy_ratio: f64,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub hidden: Vec<usize>,
    pub init_alpha: f64,
    pub reward_scale: f64,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 256,
            replay_capacity: 100_000,
            target_entropy_ratio: 0.98,
            warmup_steps: 1000,
            updates_per_step: 1,
            hidden: vec![64, 64],
            init_alpha: 1.0,
            reward_scale: 1.0,
            seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.updates_per_step == 0 {
            return bad("batch_size, replay_capacity and updates_per_step must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if !(self.init_alpha > 0.0) || !(self.reward_scale > 0.0) {
            return bad("init_alpha and reward_scale must be positive".into());
        }
        for lr in [self.lr_actor, self.lr_critic, self.lr_alpha] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("learning rates must be finite and non-negative, got {lr}"));
            }
        }
        Ok(())
    }
}

pub fn actor_input_len(n_models: usize) -> usize {
    2 * (4 + 2 * n_models)
}

/// One row per (sample, client): own block, own weights, then their means
/// over clients.
pub fn actor_inputs(states: &Array2<f64>, n_clients: usize, n_models: usize) -> Array2<f64> {
    let blk = 4 + n_models;
    let per = blk + n_models;
    let woff = n_clients * blk;
    let mut x = Array2::zeros((states.nrows() * n_clients, 2 * per));
    let inv = 1.0 / n_clients as f64;
    for (b, s) in states.outer_iter().enumerate() {
        let mut mean = vec![0.0; per];
        for c in 0..n_clients {
            for (k, v) in s.slice(ndarray::s![c * blk..(c + 1) * blk]).iter().enumerate() {
                mean[k] += v * inv;
            }
            for (k, v) in s
                .slice(ndarray::s![woff + c * n_models..woff + (c + 1) * n_models])
                .iter()
                .enumerate()
            {
                mean[blk + k] += v * inv;
            }
        }
        for c in 0..n_clients {
            let mut row = x.row_mut(b * n_clients + c);
            for k in 0..blk {
                row[k] = s[c * blk + k];
            }
            for k in 0..n_models {
                row[blk + k] = s[woff + c * n_models + k];
            }
            for k in 0..per {
                row[per + k] = mean[k];
            }
        }
    }
    x
}

/// Row-wise softmax and log-softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut logp = logits.clone();
    for mut row in logp.rows_mut() {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    (logp.mapv(f64::exp), logp)
}

pub fn entropy_rows(p: &Array2<f64>, logp: &Array2<f64>) -> Vec<f64> {
    p.rows()
        .into_iter()
        .zip(logp.rows())
        .map(|(p, l)| -p.iter().zip(l.iter()).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Per-client action distributions for one encoded state.
pub fn actor_forward(actor: &Mlp<f64>, state: &[f64], n_clients: usize, n_models: usize) -> Vec<Vec<f64>> {
    let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row vector");
    let (p, _) = softmax_rows(&actor.forward(&actor_inputs(&s, n_clients, n_models)));
    p.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct SacAgent {
    pub config: SacConfig,
    pub n_clients: usize,
    pub n_models: usize,
    pub actor: Mlp<f64>,
    pub critics: [Mlp<f64>; 2],
    pub targets: [Mlp<f64>; 2],
    pub log_alpha: f64,
    actor_opt: Adam<f64>,
    critic_opts: [Adam<f64>; 2],
    alpha_opt: Adam<f64>,
}

impl SacAgent {
    pub fn new(config: SacConfig, n_clients: usize, n_models: usize, state_len: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(actor_input_len(n_models), n_models), &mut rng, true);
        let c1 = Mlp::new(&sizes(state_len, n_clients * n_models), &mut rng, false);
        let c2 = Mlp::new(&sizes(state_len, n_clients * n_models), &mut rng, false);
        Ok(Self {
            actor_opt: Adam::new(actor.param_count(), config.lr_actor),
            critic_opts: [
                Adam::new(c1.param_count(), config.lr_critic),
                Adam::new(c2.param_count(), config.lr_critic),
            ],
            alpha_opt: Adam::new(1, config.lr_alpha),
            log_alpha: config.init_alpha.ln(),
            targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actor,
            n_clients,
            n_models,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy_ratio * (self.n_models as f64).ln()
    }

    pub fn policy(&self, states: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        softmax_rows(&self.actor.forward(&actor_inputs(states, self.n_clients, self.n_models)))
    }

    pub fn sample_action<R: Rng>(&self, state: &[f64], rng: &mut R) -> Vec<usize> {
        actor_forward(&self.actor, state, self.n_clients, self.n_models)
            .iter()
            .map(|p| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return i;
                    }
                }
                p.len() - 1
            })
            .collect()
    }

    pub fn greedy_action(&self, state: &[f64]) -> Vec<usize> {
        greedy(&actor_forward(&self.actor, state, self.n_clients, self.n_models))
    }

    fn min_q(&self, nets: &[Mlp<f64>; 2], states: &Array2<f64>) -> Array2<f64> {
        let a = nets[0].forward(states);
        let b = nets[1].forward(states);
        ndarray::Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y))
    }

    /// Soft Bellman targets, `batch × clients`.
    pub fn critic_targets(&self, batch: &Batch) -> Array2<f64> {
        let (n, m) = (self.n_clients, self.n_models);
        let alpha = self.alpha();
        let (p, logp) = self.policy(&batch.next_states);
        let q = self.min_q(&self.targets, &batch.next_states);
        Array2::from_shape_fn((batch.len(), n), |(b, c)| {
            let row = b * n + c;
            let v: f64 = (0..m)
                .map(|a| p[[row, a]] * (q[[b, c * m + a]] - alpha * logp[[row, a]]))
                .sum();
            let cont = if batch.dones[b] { 0.0 } else { 1.0 };
            batch.rewards[b] * self.config.reward_scale + self.config.gamma * cont * v
        })
    }

    pub fn critic_loss_grad(&self, critic: &Mlp<f64>, batch: &Batch, targets: &Array2<f64>) -> (f64, MlpGrads<f64>) {
        critic_loss_grad(critic, batch, targets, self.n_clients, self.n_models)
    }

    pub fn actor_loss_grad(
        &self,
        actor: &Mlp<f64>,
        states: &Array2<f64>,
        min_q: &Array2<f64>,
    ) -> (f64, MlpGrads<f64>, f64) {
        actor_loss_grad(actor, states, min_q, self.alpha(), self.n_clients, self.n_models)
    }

    /// Loss and its derivative in `log α`.
    pub fn temperature_loss_grad(&self, log_alpha: f64, mean_entropy: f64) -> (f64, f64) {
        let a = log_alpha.exp();
        let l = a * (mean_entropy - self.target_entropy());
        (l, l)
    }

    pub fn update(&mut self, batch: &Batch) -> Result<Losses> {
        let y = self.critic_targets(batch);
        let mut critic_loss = 0.0;
        for k in 0..2 {
            let (l, g) = self.critic_loss_grad(&self.critics[k], batch, &y);
            critic_loss += l;
            self.critic_opts[k].step(&mut self.critics[k], &g);
        }
        let q = self.min_q(&self.critics, &batch.states);
        let (actor_loss, g, entropy) = self.actor_loss_grad(&self.actor, &batch.states, &q);
        self.actor_opt.step(&mut self.actor, &g);
        let (temp_loss, ga) = self.temperature_loss_grad(self.log_alpha, entropy);
        let mut la = [self.log_alpha];
        self.alpha_opt.step_flat(&mut la, &[ga]);
        self.log_alpha = la[0];
        for k in 0..2 {
            let src = self.critics[k].clone();
            self.targets[k].polyak(&src, self.config.tau);
        }
        let losses = Losses {
            critic: critic_loss,
            actor: actor_loss,
            temperature: temp_loss,
            alpha: self.alpha(),
            entropy,
        };
        if ![losses.critic, losses.actor, losses.temperature, losses.alpha]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFiniteLoss(format!(
                "{losses:?}; batch rewards {:?}; log_alpha {}",
                &batch.rewards[..batch.len().min(8)],
                self.log_alpha
            )));
        }
        Ok(losses)
    }
}

pub fn greedy(probs: &[Vec<f64>]) -> Vec<usize> {
    probs
        .iter()
        .map(|p| {
            let mut best = 0;
            for (i, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// `½·mean (Q(s, a_n) − y_n)²` over samples and clients.
pub fn critic_loss_grad(
    critic: &Mlp<f64>,
    batch: &Batch,
    targets: &Array2<f64>,
    n_clients: usize,
    n_models: usize,
) -> (f64, MlpGrads<f64>) {
    let cache = critic.forward_cached(&batch.states);
    let q = &cache.output;
    let k = (batch.len() * n_clients) as f64;
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for b in 0..batch.len() {
        for c in 0..n_clients {
            let j = c * n_models + batch.actions[b][c];
            let e = q[[b, j]] - targets[[b, c]];
            loss += 0.5 * e * e / k;
            grad[[b, j]] = e / k;
        }
    }
    (loss, critic.backward(&cache, &grad))
}

/// `mean Σ_a π(a)·(α ln π(a) − minQ(a))` over samples and clients. Also
/// returns the mean policy entropy.
pub fn actor_loss_grad(
    actor: &Mlp<f64>,
    states: &Array2<f64>,
    min_q: &Array2<f64>,
    alpha: f64,
    n_clients: usize,
    n_models: usize,
) -> (f64, MlpGrads<f64>, f64) {
    let x = actor_inputs(states, n_clients, n_models);
    let cache = actor.forward_cached(&x);
    let (p, logp) = softmax_rows(&cache.output);
    let rows = x.nrows() as f64;
    let mut grad = Array2::zeros(p.raw_dim());
    let mut loss = 0.0;
    for (r, (pr, lr)) in p.rows().into_iter().zip(logp.rows()).enumerate() {
        let (b, c) = (r / n_clients, r % n_clients);
        let cost: Vec<f64> = (0..n_models)
            .map(|a| alpha * lr[a] - min_q[[b, c * n_models + a]])
            .collect();
        let mean: f64 = pr.iter().zip(&cost).map(|(p, c)| p * c).sum();
        loss += mean / rows;
        for a in 0..n_models {
            grad[[r, a]] = pr[a] * (cost[a] - mean) / rows;
        }
    }
    let entropy = entropy_rows(&p, &logp).iter().sum::<f64>() / rows;
    (loss, actor.backward(&cache, &grad), entropy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sacrl::replay::Transition;

    fn batch(n: usize, m: usize, rows: usize, seed: u64, gamma_done: bool) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = n * (4 + m) + n * m;
        let ts: Vec<Transition> = (0..rows)
            .map(|_| Transition {
                state: (0..d).map(|_| rng.gen()).collect(),
                action: (0..n).map(|_| rng.gen_range(0..m)).collect(),
                reward: rng.gen_range(0.0..5.0),
                next_state: (0..d).map(|_| rng.gen()).collect(),
                done: gamma_done,
            })
            .collect();
        Batch::from_transitions(&ts.iter().collect::<Vec<_>>())
    }

    #[test]
    fn uniform_initial_policy() {
        let agent = SacAgent::new(SacConfig::default(), 3, 4, 36).unwrap();
        let b = batch(3, 4, 5, 1, false);
        let (p, logp) = agent.policy(&b.states);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        for h in entropy_rows(&p, &logp) {
            assert!((h - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_properties() {
        let logits = Array2::from_shape_vec((2, 3), vec![0.3, -1.2, 2.0, 50.0, 49.0, -30.0]).unwrap();
        let (p, _) = softmax_rows(&logits);
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
        let (q, _) = softmax_rows(&(&logits + 7.5));
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_target_hand_values() {
        let (n, m) = (2, 3);
        let d = n * (4 + m) + n * m;
        // γ = 0: the target is the reward
        let cfg = SacConfig {
            gamma: 0.0,
            init_alpha: 0.5,
            ..Default::default()
        };
        let mut agent = SacAgent::new(cfg, n, m, d).unwrap();
        let b = batch(n, m, 4, 2, false);
        let y = agent.critic_targets(&b);
        for (bi, row) in y.rows().into_iter().enumerate() {
            assert!(row.iter().all(|&v| (v - b.rewards[bi]).abs() < 1e-12));
        }
        // with zero target critics and a uniform policy, the bootstrap term is γ·α·ln M
        for t in &mut agent.targets {
            t.set_flat(&vec![0.0; t.param_count()]);
        }
        agent.config.gamma = 0.9;
        let y = agent.critic_targets(&b);
        for (bi, row) in y.rows().into_iter().enumerate() {
            let want = b.rewards[bi] + 0.9 * 0.5 * (m as f64).ln();
            assert!(row.iter().all(|&v| (v - want).abs() < 1e-12));
        }
        let done = batch(n, m, 4, 2, true);
        let y = agent.critic_targets(&done);
        assert!((y[[0, 0]] - done.rewards[0]).abs() < 1e-12);
    }

    #[test]
    fn actor_loss_limit_is_negative_max_q() {
        // a near-deterministic policy on the best action with α → 0
        let (n, m) = (1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut actor = Mlp::new(&[actor_input_len(m), m], &mut rng, true);
        actor.layers[0].b[2] = 60.0;
        let states = Array2::from_elem((2, n * (4 + m) + n * m), 0.1);
        let q = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 4.0, 0.5, 0.0, 3.0]).unwrap();
        let (loss, _, h) = actor_loss_grad(&actor, &states, &q, 1e-12, n, m);
        assert!((loss - (-(4.0 + 3.0) / 2.0)).abs() < 1e-9);
        assert!((0.0..1e-9).contains(&h));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = SacConfig {
            lr_actor: 0.0,
            lr_critic: 0.0,
            lr_alpha: 0.0,
            tau: 1.0,
            ..Default::default()
        };
        let (n, m) = (3, 2);
        let mut agent = SacAgent::new(cfg, n, m, n * (4 + m) + n * m).unwrap();
        let before = agent.clone();
        let losses = agent.update(&batch(n, m, 16, 4, false)).unwrap();
        assert!(losses.critic.is_finite() && losses.actor.is_finite() && losses.temperature.is_finite());
        assert_eq!(agent.actor, before.actor);
        assert_eq!(agent.critics, before.critics);
        assert_eq!(agent.targets, before.critics);
        assert_eq!(agent.log_alpha, before.log_alpha);
    }

    #[test]
    fn entropy_bounded_during_updates() {
        let (n, m) = (2, 3);
        let mut agent = SacAgent::new(
            SacConfig {
                lr_actor: 1e-2,
                ..Default::default()
            },
            n,
            m,
            n * (4 + m) + n * m,
        )
        .unwrap();
        for s in 0..30 {
            let b = batch(n, m, 32, s, false);
            let l = agent.update(&b).unwrap();
            assert!(l.entropy >= 0.0 && l.entropy <= (m as f64).ln() + 1e-12);
            assert!(l.alpha > 0.0);
        }
    }
}
