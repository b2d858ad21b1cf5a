//! Learned-parameter files: a little-endian `u64` header length, a JSON
//! header, then every actor parameter as a little-endian `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::agent::SacConfig;
use super::encode::Normalization;
use super::mlp::Mlp;
use super::train::SacPolicy;
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "iscc-sac-actor";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub n_params: usize,
    pub normalization: Normalization,
    pub sac: SacConfig,
    /// Free-form echo of the run configuration.
    pub run: serde_json::Value,
}

pub fn write_params<W: Write>(mut w: W, policy: &SacPolicy, sac: &SacConfig, run: serde_json::Value) -> Result<()> {
    let header = ParamsHeader {
        format: PARAMS_FORMAT.into(),
        version: PARAMS_VERSION,
        layer_sizes: policy.actor.sizes(),
        n_params: policy.actor.param_count(),
        normalization: policy.norm.clone(),
        sac: sac.clone(),
        run,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Params(e.to_string()))?;
    let io = |e: std::io::Error| Error::Params(e.to_string());
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for p in policy.actor.flat() {
        w.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_params<R: Read>(mut r: R) -> Result<(SacPolicy, ParamsHeader)> {
    let io = |e: std::io::Error| Error::Params(format!("truncated or unreadable parameter file: {e}"));
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(Error::Params(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: ParamsHeader = serde_json::from_slice(&json).map_err(|e| Error::Params(e.to_string()))?;
    if header.format != PARAMS_FORMAT || header.version != PARAMS_VERSION {
        return Err(Error::Params(format!(
            "unsupported parameter file {} v{}",
            header.format, header.version
        )));
    }
    if header.layer_sizes.len() < 2 {
        return Err(Error::Params("need at least two layer sizes".into()));
    }
    let mut actor = Mlp::<f64>::new(&header.layer_sizes, &mut rand::rngs::mock::StepRng::new(0, 0), true);
    if actor.param_count() != header.n_params {
        return Err(Error::Params(format!(
            "header claims {} parameters, layer sizes give {}",
            header.n_params,
            actor.param_count()
        )));
    }
    let mut values = Vec::with_capacity(header.n_params);
    let mut buf = [0u8; 8];
    for _ in 0..header.n_params {
        r.read_exact(&mut buf).map_err(io)?;
        values.push(f64::from_le_bytes(buf));
    }
    if r.read(&mut buf).map_err(io)? != 0 {
        return Err(Error::Params("trailing bytes after parameters".into()));
    }
    actor.set_flat(&values);
    Ok((
        SacPolicy {
            actor,
            norm: header.normalization.clone(),
        },
        header,
    ))
}
