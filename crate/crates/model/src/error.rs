use std::path::PathBuf;

use thiserror::Error;
use typegaze_autodiff::AutodiffError;
use typegaze_core::CoreError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },
    #[error("keypress log has no taps")]
    EmptyLog,
    #[error("ground-truth scanpath is empty")]
    EmptyTarget,
    #[error("non-finite loss at step {step}{}", .checkpoint.as_ref().map(|p| format!("; last good checkpoint at {}", p.display())).unwrap_or_default())]
    Diverged { step: u64, checkpoint: Option<PathBuf> },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongCheckpoint { expected: &'static str, found: String },
}

impl ModelError {
    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        ModelError::Invalid { what, msg: msg.into() }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, ModelError::Diverged { .. } | ModelError::Autodiff(AutodiffError::NonFinite { .. }))
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
