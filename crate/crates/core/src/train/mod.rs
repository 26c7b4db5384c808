//! Losses, Adam and the alternating discriminator/generator loop.

mod adam;
mod config;
mod losses;
mod trainer;

use thiserror::Error;

pub use adam::{adam_update, Adam, AdamConfig};
pub use config::{resolve_dataset, ConvergenceConfig, DatasetRef, DiscriminatorSettings, ExperimentConfig, GeneratorSettings};
pub use losses::{
    adversarial_losses, content_loss, discriminator_loss, generator_adversarial_loss, perceptual_loss, ContentKind,
    LossConfig, LOG_FLOOR, PERCEPTUAL_NET,
};
pub use trainer::{
    assess_convergence, checkpoint_paths, discriminator_seed, epoch_batches, history_from_csv, history_to_csv,
    train, train_step, training_pairs, ConvergenceStatus, LossRecord, NanSnapshot, StepLosses, TrainOutcome,
    TrainState, FINAL_GENERATOR, LOSS_CSV_HEADER,
};

use crate::archive::ArchiveError;
use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value at step {} during {}: {}", .0.step, .0.phase, .0.detail)]
    NonFinite(Box<NanSnapshot>),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
