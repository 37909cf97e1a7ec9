//! Minimal dense-tensor engine with reverse-mode gradients, the Adam
//! optimizer, a step-decay learning-rate schedule and a binary checkpoint
//! container.

mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, GradCheck, REL_ERROR_FLOOR};
pub use graph::{Graph, Var};
pub use optim::{lr_schedule, Adam, StepDecay, DEFAULT_LR, DEFAULT_WEIGHT_DECAY};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tensor::Tensor;
