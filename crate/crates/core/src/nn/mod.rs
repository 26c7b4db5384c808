//! Generator and discriminator topologies, forward passes and checkpoints.

mod checkpoint;
mod network;
mod spec;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, CheckpointMeta};
pub use network::{Bound, Forward, Layer, Network, Param, KERNEL};
pub use spec::{NetworkSpec, Role, DISCRIMINATOR_CONVS, DISCRIMINATOR_DOWNSAMPLE};

use crate::archive::ArchiveError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input shape {actual:?} does not match the network (expected [N, {expected:?}])")]
    InputShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("layer `{layer}`: {source}")]
    Layer {
        layer: String,
        #[source]
        source: TensorError,
    },
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}
