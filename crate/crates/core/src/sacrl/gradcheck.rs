//! Central finite-difference checks of the hand-written gradients.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;

use super::agent::{actor_loss_grad, critic_loss_grad, SacAgent};
use super::mlp::Mlp;
use super::replay::Batch;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error. Below it the comparison is
/// effectively absolute, which keeps parameters whose true gradient is ~0
/// from dominating the maximum.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Parameter indices to probe: `fraction` of each layer, at least one each.
pub fn sample_indices<R: Rng>(net: &Mlp<f64>, fraction: f64, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::new();
    for r in net.layer_ranges() {
        let len = r.len();
        let k = ((len as f64 * fraction).round() as usize).clamp(1, len);
        let mut picks: Vec<usize> = sample(rng, len, k).into_iter().map(|i| r.start + i).collect();
        picks.sort_unstable();
        out.extend(picks);
    }
    out
}

/// Largest relative error between `analytic` (flat, in [`Mlp::flat`] order)
/// and central differences of `loss` over the sampled parameters.
pub fn gradient_check<F, R>(net: &Mlp<f64>, analytic: &[f64], mut loss: F, fraction: f64, rng: &mut R) -> f64
where
    F: FnMut(&Mlp<f64>) -> f64,
    R: Rng,
{
    assert_eq!(analytic.len(), net.param_count());
    let base = net.flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in sample_indices(net, fraction, rng) {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.set_flat(&p);
        let up = loss(&probe);
        p[i] = base[i] - FD_STEP;
        probe.set_flat(&p);
        let down = loss(&probe);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

pub fn check_critic<R: Rng>(agent: &SacAgent, batch: &Batch, fraction: f64, rng: &mut R) -> f64 {
    let y = agent.critic_targets(batch);
    let (n, m) = (agent.n_clients, agent.n_models);
    let net = &agent.critics[0];
    let (_, g) = critic_loss_grad(net, batch, &y, n, m);
    gradient_check(
        net,
        &g.flat(),
        |c| critic_loss_grad(c, batch, &y, n, m).0,
        fraction,
        rng,
    )
}

pub fn check_actor<R: Rng>(agent: &SacAgent, states: &Array2<f64>, fraction: f64, rng: &mut R) -> f64 {
    let (n, m) = (agent.n_clients, agent.n_models);
    let a = agent.critics[0].forward(states);
    let b = agent.critics[1].forward(states);
    let q = ndarray::Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y));
    let alpha = agent.alpha();
    let (_, g, _) = actor_loss_grad(&agent.actor, states, &q, alpha, n, m);
    gradient_check(
        &agent.actor,
        &g.flat(),
        |net| actor_loss_grad(net, states, &q, alpha, n, m).0,
        fraction,
        rng,
    )
}

pub fn check_temperature(agent: &SacAgent, states: &Array2<f64>) -> f64 {
    let (p, logp) = agent.policy(states);
    let h = super::agent::entropy_rows(&p, &logp).iter().sum::<f64>() / p.nrows() as f64;
    let (_, analytic) = agent.temperature_loss_grad(agent.log_alpha, h);
    let up = agent.temperature_loss_grad(agent.log_alpha + FD_STEP, h).0;
    let down = agent.temperature_loss_grad(agent.log_alpha - FD_STEP, h).0;
    relative_error(analytic, (up - down) / (2.0 * FD_STEP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sacrl::agent::SacConfig;
    use crate::sacrl::replay::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe_agent(seed: u64) -> (SacAgent, Batch) {
        let (n, m) = (3, 2);
        let d = n * (4 + m) + n * m;
        let mut agent = SacAgent::new(
            SacConfig {
                seed,
                init_alpha: 0.3,
                ..Default::default()
            },
            n,
            m,
            d,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        // give the actor a non-trivial output layer so that every layer has gradient
        let last = agent.actor.layers.len() - 1;
        agent.actor.layers[last].w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        let ts: Vec<Transition> = (0..8)
            .map(|_| Transition {
                state: (0..d).map(|_| rng.gen()).collect(),
                action: (0..n).map(|_| rng.gen_range(0..m)).collect(),
                reward: rng.gen_range(0.0..6.0),
                next_state: (0..d).map(|_| rng.gen()).collect(),
                done: rng.gen_bool(0.3),
            })
            .collect();
        (agent, Batch::from_transitions(&ts.iter().collect::<Vec<_>>()))
    }

    #[test]
    fn all_losses_pass() {
        for seed in 0..3 {
            let (agent, batch) = probe_agent(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert!(check_critic(&agent, &batch, 0.01, &mut rng) <= 1e-4);
            assert!(check_actor(&agent, &batch.states, 0.01, &mut rng) <= 1e-4);
            assert!(check_temperature(&agent, &batch.states) <= 1e-4);
        }
    }

    #[test]
    fn linear_quadratic_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::<f64>::new(&[5, 3], &mut rng, false);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 5 + j) as f64 * 0.37).sin());
        let t = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.2);
        let loss = |n: &Mlp<f64>| 0.5 * (&n.forward(&x) - &t).mapv(|v| v * v).sum();
        let cache = net.forward_cached(&x);
        let g = net.backward(&cache, &(&cache.output - &t));
        assert!(gradient_check(&net, &g.flat(), loss, 1.0, &mut rng) <= 1e-8);
    }

    #[test]
    fn corrupted_layer_is_caught() {
        let (agent, batch) = probe_agent(1);
        let y = agent.critic_targets(&batch);
        let net = &agent.critics[0];
        let (_, mut g) = critic_loss_grad(net, &batch, &y, 3, 2);
        g.layers[1].w *= 1.5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = gradient_check(
            net,
            &g.flat(),
            |c| critic_loss_grad(c, &batch, &y, 3, 2).0,
            0.01,
            &mut rng,
        );
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn sample_covers_every_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::<f64>::new(&[3, 4, 2], &mut rng, false);
        let idx = sample_indices(&net, 0.01, &mut rng);
        let ranges = net.layer_ranges();
        assert_eq!(idx.len(), 2);
        assert!(ranges[0].contains(&idx[0]) && ranges[1].contains(&idx[1]));
    }
}
