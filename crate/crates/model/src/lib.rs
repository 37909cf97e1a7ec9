//! Keypress-to-scanpath network with its training losses, and the amortized
//! estimator of human parameters from typing metrics.

pub mod amortizer;
pub mod config;
pub mod error;
pub mod infer;
pub mod layers;
pub mod loss;
pub mod network;
pub mod train;

pub use amortizer::{Amortizer, AmortizerConfig};
pub use config::{LossSwitches, ModelConfig};
pub use error::{ModelError, Result};
pub use infer::{infer_scanpath, DecodeMode, Inference};
pub use loss::{total_loss, LossBreakdown, Target};
pub use network::{EyeModel, FixationPrediction, Heads};
pub use train::{train, TrainConfig, TrainSample};
