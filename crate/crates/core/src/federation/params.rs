use serde::Serialize;

use crate::error::{Error, Result};

/// Parameters of one layer as exchanged between clients and server.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LayerParams {
    Conv { in_ch: u32, out_ch: u32, kernel: u32, weights: Vec<f32>, bias: Vec<f32> },
    Dense { in_dim: u32, out_dim: u32, weights: Vec<f32>, bias: Vec<f32> },
    /// PE/PI layer: arrays in order `S, O, bias`.
    Pepi { in_dim: u32, out_dim: u32, s: Vec<f32>, o: Vec<f32>, bias: Vec<f32> },
}

impl LayerParams {
    pub fn kind_tag(&self) -> u8 {
        match self {
            LayerParams::Conv { .. } => 0,
            LayerParams::Dense { .. } => 1,
            LayerParams::Pepi { .. } => 2,
        }
    }

    pub fn dims(&self) -> Vec<u32> {
        match self {
            LayerParams::Conv { in_ch, out_ch, kernel, .. } => vec![*in_ch, *out_ch, *kernel, *kernel],
            LayerParams::Dense { in_dim, out_dim, .. } | LayerParams::Pepi { in_dim, out_dim, .. } => {
                vec![*in_dim, *out_dim]
            }
        }
    }

    pub fn arrays(&self) -> Vec<&[f32]> {
        match self {
            LayerParams::Conv { weights, bias, .. } | LayerParams::Dense { weights, bias, .. } => vec![weights, bias],
            LayerParams::Pepi { s, o, bias, .. } => vec![s, o, bias],
        }
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f32>> {
        match self {
            LayerParams::Conv { weights, bias, .. } | LayerParams::Dense { weights, bias, .. } => {
                vec![weights, bias]
            }
            LayerParams::Pepi { s, o, bias, .. } => vec![s, o, bias],
        }
    }

    /// Number of values transferred for this layer.
    pub fn payload_len(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn same_shape(&self, other: &LayerParams) -> bool {
        self.kind_tag() == other.kind_tag()
            && self.dims() == other.dims()
            && self.arrays().iter().zip(other.arrays()).all(|(a, b)| a.len() == b.len())
    }
}

/// Full parameter set of a model (what is uploaded, aggregated and broadcast).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalParams {
    pub layers: Vec<LayerParams>,
}

impl GlobalParams {
    pub fn payload_len(&self) -> usize {
        self.layers.iter().map(LayerParams::payload_len).sum()
    }

    pub fn check_same_shape(&self, other: &GlobalParams) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape(format!("{} layers vs {}", self.layers.len(), other.layers.len())));
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if !a.same_shape(b) {
                return Err(Error::shape(format!("layer {i} differs in kind or shape")));
            }
        }
        Ok(())
    }

    /// Bit-level equality (distinguishes `0.0` from `-0.0` and NaN payloads).
    pub fn bit_identical(&self, other: &GlobalParams) -> bool {
        self.check_same_shape(other).is_ok()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.arrays()
                    .iter()
                    .zip(b.arrays())
                    .all(|(x, y)| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()))
            })
    }
}

/// One client's upload for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client_id: usize,
    pub params: GlobalParams,
    /// Sample count used as the FedAvg weight.
    pub weight: u64,
}
