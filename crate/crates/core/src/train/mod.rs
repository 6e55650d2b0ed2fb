//! WGAN-GP losses, Adam, the per-stage training loop, checkpoints and the
//! two-stage progressive schedule.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod progressive;
mod trainer;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ConfigError, TrainConfig};
pub use loss::{
    critic_loss_wgan_gp, generator_loss_wgan, interpolate, interpolate_rows, vanilla_gan_loss,
    vanilla_gan_value,
    Critic, CriticLoss, NetworkCritic,
};
pub use progressive::{clips_tensor, generate, train_progressive, Resume};
pub use trainer::{
    train_stage, InputSource, MetricLog, MetricRecord, NoObserver, StageKind, StageTrainer,
    TrainObserver, METRICS_HEADER,
};

use crate::audio::AudioError;
use crate::models::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("training data is empty")]
    EmptyData,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("checkpoint entry `{entry}`: {detail}")]
    Checkpoint { entry: String, detail: String },
    /// A loss went NaN or infinite. `checkpoint` holds the encoded state
    /// that produced it.
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite {
        iteration: u64,
        what: String,
        checkpoint: Vec<u8>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
