use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Which of the four loss terms contribute to training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSwitches {
    pub sim: bool,
    pub len: bool,
    pub f: bool,
    pub v: bool,
}

impl Default for LossSwitches {
    fn default() -> Self {
        LossSwitches { sim: true, len: true, f: true, v: true }
    }
}

impl LossSwitches {
    pub const NONE: LossSwitches = LossSwitches { sim: false, len: false, f: false, v: false };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    /// Number of decoder slots, the longest scanpath the model can emit.
    pub max_fixations: usize,
    pub max_taps: usize,
    /// Hidden width of the position-wise feed-forward blocks.
    pub d_ff: usize,
    pub dropout: f64,
    pub loss_switches: LossSwitches,
    pub use_param_inference: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            max_fixations: 32,
            max_taps: 48,
            d_ff: 128,
            dropout: 0.0,
            loss_switches: LossSwitches::default(),
            use_param_inference: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::invalid("model config", msg));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.max_fixations == 0 {
            return bad("max_fixations must be at least 1".into());
        }
        if self.max_taps < 2 {
            return bad("max_taps must be at least 2".into());
        }
        if self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
