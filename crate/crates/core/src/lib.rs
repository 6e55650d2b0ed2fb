//! Progressive WaveGAN toolkit: a reverse-mode tensor engine, audio
//! preprocessing, the generator/critic/autoencoder networks, WGAN-GP
//! training with checkpoints, and listening-test statistics.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Training
//! runs in `f32`; gradient checks run the same code in `f64`.

mod scalar;

pub mod audio;
pub mod eval;
pub mod models;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Params32 = models::ModelParams<f32>;
pub type Params64 = models::ModelParams<f64>;
pub type Pipeline32 = models::Pipeline<f32>;
pub type Checkpoint32 = train::Checkpoint<f32>;
