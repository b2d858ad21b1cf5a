//! Fixed-layout state vectors for the learner.
//!
//! Per client: free frequency fraction, free compute fraction, position
//! (x, y) over the area side, and one spectral efficiency per model over the
//! scenario's peak. Then one normalised gain-graph weight per (client, model)
//! edge, clients outer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{ClientResidual, GainGraph};
use crate::netmodel::Scenario;
use crate::scalar::Scalar;

/// Scales that map nominal feature ranges into `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub n_clients: usize,
    pub n_models: usize,
    pub area_side: f64,
    pub eta_scale: f64,
    /// `ln(1 + W_max)` with `W_max` the largest workload any client can sense.
    pub gain_scale: f64,
}

impl Normalization {
    pub fn for_scenario<T: Scalar>(scenario: &Scenario<T>) -> Self {
        let w_max = scenario.targets.len() as f64 * scenario.samples_per_target.as_f64();
        Self {
            n_clients: scenario.n_clients(),
            n_models: scenario.n_models(),
            area_side: scenario.area_side.as_f64(),
            eta_scale: scenario.peak_spectral_efficiency().as_f64().max(f64::MIN_POSITIVE),
            gain_scale: w_max.ln_1p().max(1.0),
        }
    }

    pub fn block_len(&self) -> usize {
        4 + self.n_models
    }

    pub fn state_len(&self) -> usize {
        self.n_clients * self.block_len() + self.n_clients * self.n_models
    }

    /// Offset of the edge-weight section.
    pub fn weights_offset(&self) -> usize {
        self.n_clients * self.block_len()
    }
}

pub fn encode_state<T: Scalar>(
    scenario: &Scenario<T>,
    residuals: &[ClientResidual<T>],
    graph: &GainGraph<T>,
    norm: &Normalization,
) -> Result<Vec<f64>> {
    let (n, m) = (norm.n_clients, norm.n_models);
    let expected = norm.state_len();
    let got = scenario.n_clients() * (4 + scenario.n_models()) + graph.n_clients() * graph.n_models();
    if scenario.n_clients() != n
        || scenario.n_models() != m
        || residuals.len() != n
        || graph.n_clients() != n
        || graph.n_models() != m
    {
        return Err(Error::LayoutMismatch { expected, got });
    }
    let mut out = Vec::with_capacity(expected);
    for (ci, (c, r)) in scenario.clients.iter().zip(residuals).enumerate() {
        out.push(r.freq_fraction.as_f64().clamp(0.0, 1.0));
        out.push(r.comp_fraction.as_f64().clamp(0.0, 1.0));
        out.push(c.position[0].as_f64() / norm.area_side);
        out.push(c.position[1].as_f64() / norm.area_side);
        for mi in 0..m {
            out.push(scenario.spectral_efficiency(ci, mi).as_f64() / norm.eta_scale);
        }
    }
    for ci in 0..n {
        out.extend(
            graph
                .client_weights(ci)
                .iter()
                .map(|e| e.weight.as_f64() / norm.gain_scale),
        );
    }
    debug_assert_eq!(out.len(), expected);
    Ok(out)
}
