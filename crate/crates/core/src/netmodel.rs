//! Scenario state: clients, edge servers hosting domain models, static targets,
//! mobility, path-loss channel and sensing domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::urp::{PoolSpec, UniversalResourcePool};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensingMode {
    /// Camera-based; consumes time only.
    Vs,
    /// Radio-based; consumes spectrum.
    Ws,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct ChannelSpec<T> {
    pub path_loss_exponent: T,
    /// Noise power in watts.
    pub noise_power: T,
    /// Linear gain at 1 m.
    pub reference_gain: T,
    pub min_distance: T,
}

impl<T: Scalar> Default for ChannelSpec<T> {
    fn default() -> Self {
        Self {
            path_loss_exponent: T::lit(3.0),
            noise_power: T::lit(1e-12),
            reference_gain: T::lit(1e-3),
            min_distance: T::one(),
        }
    }
}

/// Everything needed to build a [`Scenario`]. Defaults describe the traffic
/// case: a 500 m square with 50 connected vehicles and 100 target vehicles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct ScenarioConfig<T> {
    pub area_side_m: T,
    pub n_clients: usize,
    pub n_targets: usize,
    pub n_edges: usize,
    pub n_classes: usize,
    pub v_max: T,
    pub vsd_radius: T,
    pub wsd_radius: T,
    pub tx_power: T,
    pub channel: ChannelSpec<T>,
    pub pool: PoolSpec<T>,
    /// Visual sensing rate, samples/s.
    pub sense_rate_vs: T,
    /// Bits per wirelessly sensed sample.
    pub ws_bits_per_sample: T,
    /// Wireless sensing efficiency, bits/s/Hz.
    pub ws_efficiency: T,
    /// Samples a round can extract from one sensed target.
    pub samples_per_target: T,
    pub model_size_dl: T,
    pub model_size_ul: T,
    pub cycles_per_sample: T,
    /// Model `m` is `1 + h·m` times the base size and
    /// `1 + h·(M−1−m)` times the base per-sample cost.
    pub model_heterogeneity: T,
    /// Mass a domain model puts on its home class.
    pub home_weight: T,
    pub smoothing: T,
    /// Overrides the default grid placement of edge servers.
    pub edge_positions: Option<Vec<[T; 2]>>,
}

impl<T: Scalar> Default for ScenarioConfig<T> {
    fn default() -> Self {
        Self {
            area_side_m: T::lit(500.0),
            n_clients: 50,
            n_targets: 100,
            n_edges: 4,
            n_classes: 4,
            v_max: T::lit(15.0),
            vsd_radius: T::lit(80.0),
            wsd_radius: T::lit(120.0),
            tx_power: T::lit(0.2),
            channel: ChannelSpec::default(),
            pool: PoolSpec {
                num_slots: 9,
                freq_lanes: 4,
                comp_lanes: 2,
                slot_duration: T::lit(0.1),
                hz_per_lane: T::lit(1e6),
                cycles_per_lane_slot: T::lit(1e8),
            },
            sense_rate_vs: T::lit(200.0),
            ws_bits_per_sample: T::lit(2e4),
            ws_efficiency: T::lit(1.0),
            samples_per_target: T::lit(10.0),
            model_size_dl: T::lit(2e6),
            model_size_ul: T::lit(2e6),
            cycles_per_sample: T::lit(1e7),
            model_heterogeneity: T::lit(0.25),
            home_weight: T::lit(0.7),
            smoothing: T::lit(1e-6),
            edge_positions: None,
        }
    }
}

impl<T: Scalar> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_clients == 0 || self.n_edges == 0 || self.n_classes == 0 {
            return bad("n_clients, n_edges and n_classes must be at least 1");
        }
        let positive = [
            ("area_side_m", self.area_side_m),
            ("vsd_radius", self.vsd_radius),
            ("wsd_radius", self.wsd_radius),
            ("tx_power", self.tx_power),
            ("channel.noise_power", self.channel.noise_power),
            ("channel.reference_gain", self.channel.reference_gain),
            ("channel.min_distance", self.channel.min_distance),
            ("sense_rate_vs", self.sense_rate_vs),
            ("ws_bits_per_sample", self.ws_bits_per_sample),
            ("ws_efficiency", self.ws_efficiency),
            ("model_size_dl", self.model_size_dl),
            ("model_size_ul", self.model_size_ul),
            ("cycles_per_sample", self.cycles_per_sample),
            ("smoothing", self.smoothing),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("v_max", self.v_max),
            ("samples_per_target", self.samples_per_target),
            ("model_heterogeneity", self.model_heterogeneity),
            ("channel.path_loss_exponent", self.channel.path_loss_exponent),
        ];
        for (name, v) in non_negative {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.home_weight > T::zero() && self.home_weight <= T::one()) {
            return bad("home_weight must lie in (0, 1]");
        }
        if self.n_classes == 1 && self.home_weight < T::one() {
            return bad("home_weight must be 1 with a single class");
        }
        if let Some(pos) = &self.edge_positions {
            if pos.len() != self.n_edges {
                return Err(Error::Config(format!(
                    "edge_positions has {} entries for {} edges",
                    pos.len(),
                    self.n_edges
                )));
            }
            if pos.iter().flatten().any(|&c| c < T::zero() || c > self.area_side_m) {
                return bad("edge_positions must lie inside the area");
            }
        }
        self.pool.validate()
    }

    /// Three clients, two edge models, a handful of targets. Small enough for
    /// exhaustive search over three rounds.
    pub fn tiny() -> Self {
        Self {
            area_side_m: T::lit(200.0),
            n_clients: 3,
            n_targets: 12,
            n_edges: 2,
            vsd_radius: T::lit(70.0),
            wsd_radius: T::lit(90.0),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientState<T> {
    pub id: usize,
    pub position: [T; 2],
    pub velocity: [T; 2],
    pub pool: UniversalResourcePool<T>,
    pub sensing_mode: SensingMode,
    pub vsd_radius: T,
    pub wsd_radius: T,
    pub tx_power: T,
    pub sense_rate_vs: T,
    pub sense_bits_per_sample: T,
    pub ws_efficiency: T,
    pub local_dist: Vec<T>,
}

impl<T: Scalar> ClientState<T> {
    pub fn sensing_radius(&self) -> T {
        match self.sensing_mode {
            SensingMode::Vs => self.vsd_radius,
            SensingMode::Ws => self.wsd_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeModel<T> {
    pub id: usize,
    pub position: [T; 2],
    pub domain_dist: Vec<T>,
    pub model_size_dl: T,
    pub model_size_ul: T,
    pub cycles_per_sample: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target<T> {
    pub id: usize,
    pub position: [T; 2],
    /// Zero-based class index.
    pub class_label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Scenario<T> {
    pub area_side: T,
    pub n_classes: usize,
    pub clients: Vec<ClientState<T>>,
    pub edges: Vec<EdgeModel<T>>,
    pub targets: Vec<Target<T>>,
    pub channel: ChannelSpec<T>,
    pub pool_spec: PoolSpec<T>,
    pub samples_per_target: T,
    pub smoothing: T,
    pub rng_seed: u64,
    pub time: T,
}

fn distance<T: Scalar>(a: &[T; 2], b: &[T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Centres of a near-square grid of `n` cells over the area.
fn grid_centres<T: Scalar>(n: usize, side: T) -> Vec<[T; 2]> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let cw = side / T::from_usize_lossy(cols);
    let rh = side / T::from_usize_lossy(rows);
    let half = T::lit(0.5);
    (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            [
                (T::from_usize_lossy(c) + half) * cw,
                (T::from_usize_lossy(r) + half) * rh,
            ]
        })
        .collect()
}

/// Domain distribution of model `m`: `home_weight` on class `m mod K`, the
/// rest spread evenly.
pub fn domain_distribution<T: Scalar>(m: usize, n_classes: usize, home_weight: T) -> Vec<T> {
    if n_classes == 1 {
        return vec![T::one()];
    }
    let other = (T::one() - home_weight) / T::from_usize_lossy(n_classes - 1);
    (0..n_classes)
        .map(|k| if k == m % n_classes { home_weight } else { other })
        .collect()
}

pub fn generate_scenario<T: Scalar>(config: &ScenarioConfig<T>, seed: u64) -> Result<Scenario<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = config.area_side_m.as_f64();
    let vmax = config.v_max.as_f64();
    let pool = UniversalResourcePool::from_spec(&config.pool)?;
    let uniform_dist = vec![T::one() / T::from_usize_lossy(config.n_classes); config.n_classes];

    let clients = (0..config.n_clients)
        .map(|id| {
            let position = [T::lit(rng.gen_range(0.0..=side)), T::lit(rng.gen_range(0.0..=side))];
            let velocity = if vmax > 0.0 {
                [T::lit(rng.gen_range(-vmax..=vmax)), T::lit(rng.gen_range(-vmax..=vmax))]
            } else {
                [T::zero(); 2]
            };
            ClientState {
                id,
                position,
                velocity,
                pool: pool.clone(),
                sensing_mode: if id % 2 == 0 { SensingMode::Vs } else { SensingMode::Ws },
                vsd_radius: config.vsd_radius,
                wsd_radius: config.wsd_radius,
                tx_power: config.tx_power,
                sense_rate_vs: config.sense_rate_vs,
                sense_bits_per_sample: config.ws_bits_per_sample,
                ws_efficiency: config.ws_efficiency,
                local_dist: uniform_dist.clone(),
            }
        })
        .collect();

    let targets = (0..config.n_targets)
        .map(|id| Target {
            id,
            position: [T::lit(rng.gen_range(0.0..=side)), T::lit(rng.gen_range(0.0..=side))],
            class_label: rng.gen_range(0..config.n_classes),
        })
        .collect();

    let positions = config
        .edge_positions
        .clone()
        .unwrap_or_else(|| grid_centres(config.n_edges, config.area_side_m));
    let m_last = T::from_usize_lossy(config.n_edges - 1);
    let h = config.model_heterogeneity;
    let edges = positions
        .into_iter()
        .enumerate()
        .map(|(id, position)| {
            let m = T::from_usize_lossy(id);
            EdgeModel {
                id,
                position,
                domain_dist: domain_distribution(id, config.n_classes, config.home_weight),
                model_size_dl: config.model_size_dl * (T::one() + h * m),
                model_size_ul: config.model_size_ul * (T::one() + h * m),
                cycles_per_sample: config.cycles_per_sample * (T::one() + h * (m_last - m)),
            }
        })
        .collect();

    let mut scenario = Scenario {
        area_side: config.area_side_m,
        n_classes: config.n_classes,
        clients,
        edges,
        targets,
        channel: config.channel.clone(),
        pool_spec: config.pool.clone(),
        samples_per_target: config.samples_per_target,
        smoothing: config.smoothing,
        rng_seed: seed,
        time: T::zero(),
    };
    scenario.refresh_local_distributions();
    Ok(scenario)
}

/// Reflects a coordinate back into `[0, side]`; returns the new coordinate
/// and whether the velocity component flips.
fn reflect<T: Scalar>(x: T, side: T) -> (T, bool) {
    if x >= T::zero() && x <= side {
        return (x, false);
    }
    let two = side + side;
    let crossings = (x / side).floor();
    let folded = x - (x / two).floor() * two;
    let pos = if folded <= side { folded } else { two - folded };
    let odd = (crossings - (crossings / T::lit(2.0)).floor() * T::lit(2.0)) != T::zero();
    (pos.max(T::zero()).min(side), odd)
}

impl<T: Scalar> Scenario<T> {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_models(&self) -> usize {
        self.edges.len()
    }

    /// Constant-velocity motion with elastic reflection at the boundary.
    pub fn step_mobility(&mut self, dt: T) {
        if dt <= T::zero() {
            return;
        }
        let side = self.area_side;
        for c in &mut self.clients {
            for axis in 0..2 {
                let (pos, flip) = reflect(c.position[axis] + c.velocity[axis] * dt, side);
                c.position[axis] = pos;
                if flip {
                    c.velocity[axis] = -c.velocity[axis];
                }
            }
        }
        self.time += dt;
    }

    /// Per-class counts of targets inside the client's active sensing domain
    /// (closed ball).
    pub fn sense_targets(&self, client: usize) -> Vec<usize> {
        let c = &self.clients[client];
        let r = c.sensing_radius();
        let mut counts = vec![0usize; self.n_classes];
        for t in &self.targets {
            if distance(&c.position, &t.position) <= r {
                counts[t.class_label] += 1;
            }
        }
        counts
    }

    /// Re-senses every client and refreshes its smoothed class distribution.
    pub fn refresh_local_distributions(&mut self) {
        for n in 0..self.clients.len() {
            let counts = self.sense_targets(n);
            self.clients[n].local_dist = local_distribution(&counts, self.smoothing);
        }
    }

    pub fn spectral_efficiency(&self, client: usize, model: usize) -> T {
        spectral_efficiency(&self.clients[client], &self.edges[model], &self.channel)
    }

    /// Efficiency at the minimum distance; an upper bound for every pair.
    pub fn peak_spectral_efficiency(&self) -> T {
        self.clients
            .iter()
            .map(|c| {
                snr_to_efficiency(
                    c.tx_power
                        * self.channel.reference_gain
                        * self.channel.min_distance.powf(-self.channel.path_loss_exponent)
                        / self.channel.noise_power,
                )
            })
            .fold(T::zero(), T::max)
    }
}

fn snr_to_efficiency<T: Scalar>(snr: T) -> T {
    (T::one() + snr).log2()
}

/// `log2(1 + P·g·d^−α / N0)` with `d` clamped to the channel's minimum distance.
pub fn spectral_efficiency<T: Scalar>(client: &ClientState<T>, edge: &EdgeModel<T>, channel: &ChannelSpec<T>) -> T {
    let d = distance(&client.position, &edge.position).max(channel.min_distance);
    let snr = client.tx_power * channel.reference_gain * d.powf(-channel.path_loss_exponent) / channel.noise_power;
    snr_to_efficiency(snr)
}

/// `(counts[k] + ε) / (Σ counts + K·ε)`.
pub fn local_distribution<T: Scalar>(counts: &[usize], smoothing: T) -> Vec<T> {
    let k = T::from_usize_lossy(counts.len());
    let total = T::from_usize_lossy(counts.iter().sum());
    let denom = total + k * smoothing;
    counts
        .iter()
        .map(|&c| (T::from_usize_lossy(c) + smoothing) / denom)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_client(pos: [f64; 2], vel: [f64; 2]) -> Scenario<f64> {
        let cfg = ScenarioConfig::<f64> {
            n_clients: 1,
            n_targets: 0,
            ..Default::default()
        };
        let mut s = generate_scenario(&cfg, 1).unwrap();
        s.clients[0].position = pos;
        s.clients[0].velocity = vel;
        s
    }

    #[test]
    fn default_config_matches_traffic_case() {
        let s = generate_scenario(&ScenarioConfig::<f64>::default(), 7).unwrap();
        assert_eq!(s.clients.len(), 50);
        assert_eq!(s.targets.len(), 100);
        assert_eq!(s.area_side, 500.0);
        assert_eq!(s.edges.len(), 4);
        assert_eq!(s.edges[0].position, [125.0, 125.0]);
        assert_eq!(s.edges[3].position, [375.0, 375.0]);
        for c in &s.clients {
            assert!(c.position.iter().all(|&x| (0.0..=500.0).contains(&x)));
            assert!(c.velocity.iter().all(|&v| v.abs() <= 15.0));
        }
        assert_eq!(s.clients[0].sensing_mode, SensingMode::Vs);
        assert_eq!(s.clients[1].sensing_mode, SensingMode::Ws);
    }

    #[test]
    fn empty_target_scenario_senses_nothing() {
        let cfg = ScenarioConfig::<f64> {
            n_clients: 1,
            n_targets: 0,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 3).unwrap();
        assert_eq!(s.sense_targets(0), vec![0; 4]);
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = ScenarioConfig::<f64>::default();
        assert_eq!(
            generate_scenario(&cfg, 11).unwrap(),
            generate_scenario(&cfg, 11).unwrap()
        );
        assert_ne!(
            generate_scenario(&cfg, 11).unwrap(),
            generate_scenario(&cfg, 12).unwrap()
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ScenarioConfig::<f64> {
            n_clients: 0,
            ..Default::default()
        };
        assert!(matches!(generate_scenario(&cfg, 0), Err(Error::Config(_))));
        let cfg = ScenarioConfig::<f64> {
            area_side_m: 0.0,
            ..Default::default()
        };
        assert!(generate_scenario(&cfg, 0).is_err());
    }

    #[test]
    fn mobility_identity_and_reflection() {
        let mut s = one_client([499.0, 250.0], [20.0, 0.0]);
        let before = s.clone();
        s.step_mobility(0.0);
        assert_eq!(s, before);

        s.step_mobility(0.1);
        assert!((s.clients[0].position[0] - 499.0).abs() < 1e-9);
        assert_eq!(s.clients[0].velocity[0], -20.0);

        let mut s = one_client([250.0, 250.0], [10.0, 0.0]);
        s.step_mobility(1.0);
        assert_eq!(s.clients[0].position, [260.0, 250.0]);
    }

    #[test]
    fn spectral_efficiency_closed_forms() {
        let mut s = one_client([0.0, 0.0], [0.0, 0.0]);
        s.edges[0].position = [10.0, 0.0];
        s.channel.path_loss_exponent = 2.0;
        // choose N0 so the SNR at 10 m is exactly 1
        s.channel.noise_power = s.clients[0].tx_power * s.channel.reference_gain / 100.0;
        assert!((s.spectral_efficiency(0, 0) - 1.0).abs() < 1e-12);
        s.channel.noise_power /= 3.0;
        assert!((s.spectral_efficiency(0, 0) - 2.0).abs() < 1e-12);

        // doubling the distance quarters the SNR at α = 2: 3 → 0.75
        s.edges[0].position = [20.0, 0.0];
        assert!((s.spectral_efficiency(0, 0) - 1.75f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn sensing_uses_closed_ball() {
        let mut s = one_client([100.0, 100.0], [0.0, 0.0]);
        let r = s.clients[0].vsd_radius;
        s.targets = vec![
            Target {
                id: 0,
                position: [100.0 + r, 100.0],
                class_label: 1,
            },
            Target {
                id: 1,
                position: [100.0, 100.0 + r + 1.0],
                class_label: 2,
            },
        ];
        assert_eq!(s.sense_targets(0), vec![0, 1, 0, 0]);
    }

    #[test]
    fn smoothing_examples() {
        let p: Vec<f64> = local_distribution(&[0, 0], 1e-6);
        assert_eq!(p, vec![0.5, 0.5]);
        let p: Vec<f64> = local_distribution(&[3, 1], 1e-12);
        assert!((p[0] - 0.75).abs() < 1e-9 && (p[1] - 0.25).abs() < 1e-9);
        let p: Vec<f64> = local_distribution(&[1, 0, 0], 1.0);
        assert_eq!(p, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn domain_distribution_is_home_dominant() {
        let q: Vec<f64> = domain_distribution(5, 4, 0.7);
        assert_eq!(q[1], 0.7);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let s = generate_scenario(&ScenarioConfig::<f32>::default(), 7).unwrap();
        assert_eq!(s.clients.len(), 50);
        assert!(s.spectral_efficiency(0, 0) > 0.0);
    }

    proptest! {
        #[test]
        fn reflection_stays_inside(x in 0.0f64..500.0, v in -40.0f64..40.0, steps in 1usize..200, dt in 0.0f64..30.0) {
            let mut s = one_client([x, 250.0], [v, 0.0]);
            for _ in 0..steps {
                s.step_mobility(dt);
                let p = s.clients[0].position[0];
                prop_assert!((0.0..=500.0).contains(&p));
                prop_assert_eq!(s.clients[0].velocity[0].abs(), v.abs());
            }
        }

        #[test]
        fn efficiency_positive_and_monotone(d1 in 0.0f64..700.0, extra in 0.0f64..700.0, alpha in 2.0f64..4.0) {
            let mut s = one_client([0.0, 0.0], [0.0, 0.0]);
            s.channel.path_loss_exponent = alpha;
            s.edges[0].position = [d1, 0.0];
            let near = s.spectral_efficiency(0, 0);
            s.edges[0].position = [d1 + extra, 0.0];
            let far = s.spectral_efficiency(0, 0);
            prop_assert!(near > 0.0 && far > 0.0);
            prop_assert!(far <= near);
        }

        #[test]
        fn local_distribution_is_probability(counts in proptest::collection::vec(0usize..1000, 1..8), eps in 1e-9f64..1.0) {
            let p: Vec<f64> = local_distribution(&counts, eps);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
