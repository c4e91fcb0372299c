//! Differentiable network engine: layers, forward/backward passes, Adam and
//! checkpoints.

mod adam;
mod arch;
mod checkpoint;
pub mod layers;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{count_params, ArchitectureConfig, ConvBlock, ConvSpec};
pub use checkpoint::{Checkpoint, NamedTensor, Provenance, RunningStats, FORMAT_VERSION, MAGIC};
pub use network::{forward, init_params, loss_and_grads, Gradients, Mode};
pub use tensor::TensorBuffer;
pub use train::{
    accuracy, predict, run_epochs, train, train_step, EpochRecord, TrainConfig, TrainHistory,
    BN_MOMENTUM,
};
