//! Motion prediction network: per-part set-abstraction encoder, residual
//! message passing over the coupling graph and a temporal self-attention
//! decoder that emits one relative twist per part and frame.

pub mod checkpoint;
mod config;
mod input;
mod net;

use std::path::Path;

pub use config::{ModelConfig, SaStage};
pub use input::{rotate_twists_z, subsample, AssemblyInput, PartGrouping, Sampling};
pub use net::{encode_part, encode_parts, forward, gnn_refine, init_params, temporal_decode};

use crate::autodiff::{Graph, ParamStore, Real, Tensor};
use crate::error::{Error, Result};
use crate::se3::Twist;

/// Configuration plus 32-bit parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamo {
    pub cfg: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Dynamo {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let params = init_params(&cfg)?;
        Ok(Self { cfg, params })
    }

    /// Adopt `params` after checking names and shapes against `cfg`.
    pub fn from_params(cfg: ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        let want = init_params::<f32>(&cfg)?;
        let same = want.len() == params.len()
            && want
                .iter()
                .zip(params.iter())
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape());
        if !same {
            return Err(Error::Config("checkpoint does not match the model configuration".into()));
        }
        Ok(Self { cfg, params })
    }

    pub fn load(cfg: ModelConfig, path: &Path) -> Result<Self> {
        let params = checkpoint::load(path)?;
        Self::from_params(cfg, params).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    /// Raw `(M·T) × 6` output.
    pub fn predict_raw(&self, input: &AssemblyInput) -> Result<Tensor<f32>> {
        let mut g = Graph::new(&self.params);
        let out = forward(&mut g, &self.cfg, input)?;
        Ok(g.value(out).clone())
    }

    pub fn predict(&self, input: &AssemblyInput) -> Result<Vec<Vec<Twist>>> {
        let raw = self.predict_raw(input)?;
        Ok(split_twists(&raw, input.n_parts(), self.cfg.frames))
    }
}

/// Split a `(M·T) × 6` output into per-part twist sequences.
pub fn split_twists<T: Real>(out: &Tensor<T>, parts: usize, frames: usize) -> Vec<Vec<Twist>> {
    (0..parts)
        .map(|p| {
            (0..frames)
                .map(|t| {
                    let row: Vec<f64> = out.row(p * frames + t).iter().map(|x| x.as_f64()).collect();
                    Twist::from_slice(&row)
                })
                .collect()
        })
        .collect()
}
