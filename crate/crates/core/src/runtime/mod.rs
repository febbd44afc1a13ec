//! Integer-only inference over a `TBND` bundle, executed inside a fixed-size
//! byte arena that emulates the device's SRAM.

mod engine;
mod exp;

use thiserror::Error;

use crate::quant::QuantError;

pub use engine::{ArenaReport, Engine, InferenceResult, DEFAULT_ARENA_BYTES, MAX_ARENA_BYTES};
pub use exp::exp_nonpositive;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Bundle(#[from] QuantError),
    #[error("model needs {needed} arena bytes; capacity is {capacity}")]
    ArenaOverflow { needed: usize, capacity: usize },
    #[error("arena capacity {0} exceeds the {max} byte device budget", max = MAX_ARENA_BYTES)]
    BadCapacity(usize),
    #[error("no model loaded")]
    NoModel,
    #[error("window has {got} values; expected {expected}")]
    BadInput { expected: usize, got: usize },
    #[error("layer {layer}: worst-case accumulator {bound} does not fit in i32")]
    AccumulatorRange { layer: usize, bound: i64 },
}

pub type Result<T, E = RuntimeError> = std::result::Result<T, E>;
