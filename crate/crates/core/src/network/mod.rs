//! The face embedding network: configuration, parameter counting, forward
//! and backward passes, and embedding extraction.

mod config;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{channel_concat, conv2d, relu, ConvSpec, Tensor};

pub use config::{
    count_params, FireSpec, NetworkConfig, ParamScope, Stage, TraceRow, Variant, EMBEDDING_DIM, INPUT_CHANNELS,
    INPUT_SIZE,
};
pub use model::{Gradients, Init, Mode, NamedArray, Network, Param, Tape, WeightStore};

/// Face descriptor taken at the pooling head. Entries are non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("embedding entry {i} is {v}; entries must be finite and >= 0")));
        }
        Ok(Embedding(values))
    }

    pub(crate) fn new_unchecked(values: Vec<f32>) -> Self {
        Embedding(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

/// Weights of a fire module built from standard convolutions.
#[derive(Debug, Clone)]
pub struct FireWeights<'a> {
    pub squeeze: (&'a [f32], &'a [f32]),
    pub expand_1x1: (&'a [f32], &'a [f32]),
    pub expand_3x3: (&'a [f32], &'a [f32]),
}

/// `concat(relu(expand1x1(s)), relu(expand3x3(s)))` with `s = relu(squeeze(x))`.
pub fn fire_forward(x: &Tensor, spec: &FireSpec, weights: &FireWeights<'_>) -> Result<Tensor> {
    let c = x.shape().c;
    let sq = ConvSpec::standard(c, spec.squeeze_1x1, 1, 0);
    let e1 = ConvSpec::standard(spec.squeeze_1x1, spec.expand_1x1, 1, 0);
    let e3 = ConvSpec::standard(spec.squeeze_1x1, spec.expand_3x3, 3, 1);
    let s = relu(&conv2d(x, &sq, weights.squeeze.0, Some(weights.squeeze.1))?);
    let a = relu(&conv2d(&s, &e1, weights.expand_1x1.0, Some(weights.expand_1x1.1))?);
    let b = relu(&conv2d(&s, &e3, weights.expand_3x3.0, Some(weights.expand_3x3.1))?);
    channel_concat(&a, &b)
}
