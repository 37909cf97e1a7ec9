//! Keypress logs, scanpaths and everything computed from them: screen geometry,
//! typing metrics, scanpath similarity, eye-hand coordination analyses and a
//! parametric typist simulator.

// NaN must fail the positivity guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod phrases;
pub mod simulator;
pub mod svg;
pub mod types;
pub mod typing;

pub use error::{CoreError, Result};
pub use geometry::{key_at, region_of, Key, KeyboardLayout, Region, ScreenGeometry};
pub use types::{Fixation, HumanParams, KeypressLog, Scanpath, TapEvent, TypingMetrics};
