//! Learning-performance gain and the latent client ↔ model graph.
//!
//! Gain couples how well a client's sensed data matches a model's domain
//! (`exp(−KL(P_client ‖ Q_model))`) with how many samples the pair can push
//! through a round (`ln(1 + W)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Scenario, SensingMode};
use crate::scalar::Scalar;
use crate::urp::UniversalResourcePool;
use crate::workload::{solve_workload, SensingSpec, WorkloadProblem};

/// `exp(−D_KL(P ‖ Q))` in nats. Zero-mass entries of `P` contribute nothing.
pub fn similarity<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let kl: T = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > T::zero())
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    Ok((-kl.max(T::zero())).exp())
}

/// `s · ln(1 + W)`.
pub fn gain<T: Scalar>(similarity: T, workload: T) -> T {
    similarity * workload.ln_1p()
}

/// Time windows of the round being planned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundWindows<T> {
    pub t_gen: T,
    pub t_cons: T,
    /// Generation shares a communication round with another round's consumption.
    pub coupled: bool,
}

/// What a client's pool leaves for the round being planned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientResidual<T> {
    /// Per lane-slot residuals, row-major.
    pub freq: Vec<T>,
    pub comp: Vec<T>,
    /// Fractions of grid capacity still free.
    pub freq_fraction: T,
    pub comp_fraction: T,
    /// Average residual bandwidth over the window, Hz.
    pub bandwidth: T,
    /// Compute rate available to the round's consumption, cycles/s.
    pub compute: T,
}

impl<T: Scalar> ClientResidual<T> {
    /// Reads the current pool. Bandwidth is the frequency residual averaged
    /// over the window. Compute is the full grid rate: the round's training
    /// runs in the following communication round, whose compute grid is
    /// claimed by nothing else.
    pub fn from_pool(pool: &UniversalResourcePool<T>) -> Self {
        let (freq, comp) = pool
            .residual(0..pool.num_slots())
            .expect("full horizon is always in range");
        let window = pool.slot_duration * T::from_usize_lossy(pool.num_slots());
        let freq_total: T = freq.iter().copied().sum();
        let comp_total: T = comp.iter().copied().sum();
        Self {
            freq_fraction: freq_total / pool.time_freq.total_capacity(),
            comp_fraction: comp_total / pool.time_comp.total_capacity(),
            bandwidth: freq_total / window,
            compute: pool.time_comp.total_capacity() / window,
            freq,
            comp,
        }
    }
}

/// Builds the workload program of pairing `client` with `model` this round.
pub fn workload_problem<T: Scalar>(
    scenario: &Scenario<T>,
    client: usize,
    model: usize,
    windows: &RoundWindows<T>,
    residual: &ClientResidual<T>,
    sensed_targets: usize,
) -> WorkloadProblem<T> {
    let c = &scenario.clients[client];
    let e = &scenario.edges[model];
    WorkloadProblem {
        t_gen: windows.t_gen,
        t_cons: windows.t_cons,
        bandwidth: residual.bandwidth,
        compute: residual.compute,
        eta: scenario.spectral_efficiency(client, model),
        size_dl: e.model_size_dl,
        size_ul: e.model_size_ul,
        cycles_per_sample: e.cycles_per_sample,
        sensing: match c.sensing_mode {
            SensingMode::Vs => SensingSpec::Vs {
                secs_per_sample: T::one() / c.sense_rate_vs,
            },
            SensingMode::Ws => SensingSpec::Ws {
                bits_per_sample: c.sense_bits_per_sample,
                efficiency: c.ws_efficiency,
            },
        },
        w_cap: T::from_usize_lossy(sensed_targets) * scenario.samples_per_target,
        coupled: windows.coupled,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientVertex<T> {
    pub client_id: usize,
    /// Flattened frequency residuals, compute residuals, position, then η per model.
    pub features: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainEdge<T> {
    pub client_id: usize,
    pub model_id: usize,
    pub weight: T,
    pub workload: u64,
    pub similarity: T,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainGraph<T> {
    pub client_vertices: Vec<ClientVertex<T>>,
    pub model_vertices: Vec<usize>,
    /// Row-major over (client, model).
    pub edges: Vec<GainEdge<T>>,
}

impl<T: Scalar> GainGraph<T> {
    pub fn n_clients(&self) -> usize {
        self.client_vertices.len()
    }

    pub fn n_models(&self) -> usize {
        self.model_vertices.len()
    }

    pub fn edge(&self, client: usize, model: usize) -> &GainEdge<T> {
        &self.edges[client * self.n_models() + model]
    }

    pub fn weight(&self, client: usize, model: usize) -> T {
        self.edge(client, model).weight
    }

    pub fn client_weights(&self, client: usize) -> &[GainEdge<T>] {
        let m = self.n_models();
        &self.edges[client * m..(client + 1) * m]
    }
}

/// One solve per (client, model) pair; each edge weight is the gain of the
/// pair's optimal workload.
pub fn build_gain_graph<T: Scalar>(
    scenario: &Scenario<T>,
    windows: &RoundWindows<T>,
    residuals: &[ClientResidual<T>],
) -> Result<GainGraph<T>> {
    let n = scenario.n_clients();
    let m = scenario.n_models();
    if residuals.len() != n {
        return Err(Error::DimensionMismatch {
            left: residuals.len(),
            right: n,
        });
    }
    let mut client_vertices = Vec::with_capacity(n);
    let mut edges = Vec::with_capacity(n * m);
    for (ci, res) in residuals.iter().enumerate() {
        let client = &scenario.clients[ci];
        let sensed: usize = scenario.sense_targets(ci).iter().sum();
        let mut features = Vec::with_capacity(res.freq.len() + res.comp.len() + 2 + m);
        features.extend_from_slice(&res.freq);
        features.extend_from_slice(&res.comp);
        features.extend_from_slice(&client.position);
        for mi in 0..m {
            features.push(scenario.spectral_efficiency(ci, mi));
            let problem = workload_problem(scenario, ci, mi, windows, res, sensed);
            let sol = solve_workload(&problem)?;
            let s = similarity(&client.local_dist, &scenario.edges[mi].domain_dist)?;
            edges.push(GainEdge {
                client_id: client.id,
                model_id: scenario.edges[mi].id,
                weight: gain(s, T::lit(sol.w_star as f64)),
                workload: sol.w_star,
                similarity: s,
                feasible: sol.feasible,
            });
        }
        client_vertices.push(ClientVertex {
            client_id: client.id,
            features,
        });
    }
    Ok(GainGraph {
        client_vertices,
        model_vertices: scenario.edges.iter().map(|e| e.id).collect(),
        edges,
    })
}
