//! A small 1D CNN written from scratch: two conv blocks, a hidden dense layer
//! and a softmax head. Training runs in double precision.

mod arch;
mod backward;
pub mod checkpoint;
mod evaluate;
mod forward;
mod model;
mod optim;
mod personalize;
mod train;

use thiserror::Error;

pub use arch::{Architecture, LayerId};
pub use backward::{loss_and_grads, Example};
pub use checkpoint::Checkpoint;
pub use evaluate::{evaluate, Evaluation};
pub use forward::{forward_sites, forward_with, Real, Sites};
pub use model::{init_model, CnnModel, Gradients, Params, Tensor};
pub use optim::Adam;
pub use personalize::{fine_tune_head, personalize, sample_per_class, Personalized, EXAMPLES_PER_CLASS};
pub use train::{train, EpochStats, TrainConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("a model needs at least 2 classes, got {0}")]
    BadClassCount(usize),
    #[error("input has {got} values; the architecture expects {expected}")]
    BadInput { expected: usize, got: usize },
    #[error("label {0:?} is not in the class map")]
    BadLabel(String),
    #[error("class id {id} out of range for {classes} classes")]
    BadClassId { id: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("class {class:?} has {have} examples; {need} are required")]
    InsufficientExamples { class: String, have: usize, need: usize },
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
