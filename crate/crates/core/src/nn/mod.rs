//! Toy-scale embedding network on a small reverse-mode autodiff tape.
//!
//! An image encoder (four strided convolutions and a dense projection) and a
//! trajectory encoder (embedding, sinusoidal positions, one self-attention
//! layer read out through a learned token) are concatenated and fused into
//! the latent z. A decoder reconstructs the two-channel target from z.

mod checkpoint;
mod model;
pub mod tape;
mod train;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use model::{
    encode_input, forward_decode, forward_encode, prepare_input, Bound, LatentVector, ModelState, NetworkConfig,
    Param, ScenarioInput,
};
pub use tape::{Tape, Tensor, Var};
pub use train::{
    adam_direction, embed_dataset, embed_prepared, objective, ordering_satisfaction, train, train_step, train_with,
    EpochMetrics, LossBreakdown, LrSchedule, PreparedData, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("divergence at step {step}: {detail}")]
    Divergence {
        epoch: Option<usize>,
        step: u64,
        detail: String,
        /// Parameters before the failing step.
        last_good: Option<Box<ModelState>>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}
