//! Learned models: the pulse estimator, the translation generator, their
//! losses, the alternating training loop and checkpoints.

pub mod checkpoint;
pub mod data;
pub mod generator;
pub mod losses;
pub mod params;
pub mod prn;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::clips_from_video;
pub use generator::{Generator, GeneratorConfig};
pub use losses::{loss_appearance, loss_estimator, loss_generator, loss_ppg, GeneratorLoss, PPG_EPS};
pub use params::{Bound, ParamSet};
pub use prn::{Prn, PrnConfig};
pub use train::{
    make_batches, new_prn, train_joint, train_prn, JointModels, LogEntry, Phase, PrnState, TrainClip, TrainConfig,
    TrainLog,
};

use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite loss at step {step} ({phase}): {snapshot}")]
    NonFinite { step: usize, phase: String, snapshot: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
