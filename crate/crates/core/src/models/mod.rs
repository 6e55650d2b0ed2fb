//! Network descriptions, parameters, forward evaluation and stage chaining.

mod forward;
mod params;
mod pipeline;
mod spec;

pub use forward::{apply, forward, phase_shuffle, shuffle_index};
pub use params::{bias_name, weight_name, ModelParams, ParamVars, INIT_STD};
pub use pipeline::{chain, sample_noise, NoiseRange, Pipeline, Stage};
pub use spec::{
    build_autoencoder, build_discriminator, build_generator, Layer, NetworkSpec, Role,
    DEFAULT_SHUFFLE, KERNEL, LRELU_ALPHA, STRIDE, Z_DIM,
};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("layer {index}: {source}")]
    Layer { index: usize, source: TensorError },
    #[error("layer {index}: {detail}")]
    LayerShape { index: usize, detail: String },
    #[error("input shape {got:?} does not match network input {expected:?}")]
    Input { expected: Vec<usize>, got: Vec<usize> },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("cannot chain stages: {0}")]
    Chain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
