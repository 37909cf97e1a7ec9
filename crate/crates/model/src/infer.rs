//! Decoding head outputs into scanpaths, with chunking for long logs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use typegaze_core::{Fixation, HumanParams, KeypressLog, Scanpath, ScreenGeometry};

use crate::error::{ModelError, Result};
use crate::network::{tap_features, EyeModel, FixationPrediction, MIN_DURATION_S};

/// Taps shared by consecutive chunks of a long log.
pub const CHUNK_OVERLAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    /// Take the predicted means.
    Mean,
    /// Draw each fixation from its predicted Gaussians.
    Sample { seed: u64 },
}

/// Fixations decoded from one prediction, onsets starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub fixations: Vec<Fixation>,
    /// Set when no slot was valid and slot 0 was used alone.
    pub degenerate: bool,
}

/// Keeps the leading run of slots with `sigmoid(logit) > 0.5`.
pub fn decode(pred: &FixationPrediction, geom: &ScreenGeometry, mode: DecodeMode) -> Decoded {
    let valid = pred.validity_logit.iter().take_while(|&&s| s > 0.0).count();
    let (n, degenerate) = if valid == 0 { (1, true) } else { (valid, false) };
    let mut rng = match mode {
        DecodeMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        DecodeMode::Mean => None,
    };
    let mut onset = 0.0;
    let mut fixations = Vec::with_capacity(n);
    for i in 0..n {
        let (mut x, mut y, mut t) = (pred.mean_x[i], pred.mean_y[i], pred.mean_duration_s[i]);
        if let Some(r) = rng.as_mut() {
            let z: [f64; 3] = [StandardNormal.sample(r), StandardNormal.sample(r), StandardNormal.sample(r)];
            x += pred.sd_x[i] * z[0];
            y += pred.sd_y[i] * z[1];
            t += pred.sd_duration_s[i] * z[2];
        }
        let duration_ms = t.max(MIN_DURATION_S) * 1000.0;
        fixations.push(Fixation {
            x: (x.clamp(0.0, 1.0) * geom.width).clamp(0.0, geom.width),
            y: (y.clamp(0.0, 1.0) * geom.height).clamp(0.0, geom.height),
            duration_ms,
            onset_ms: onset,
        });
        onset += duration_ms;
    }
    Decoded { fixations, degenerate }
}

/// Tap index ranges of the chunks covering `n` taps.
pub fn chunk_ranges(n: usize, max_taps: usize) -> Vec<(usize, usize)> {
    if n <= max_taps {
        return vec![(0, n)];
    }
    let stride = max_taps - CHUNK_OVERLAP.min(max_taps - 1);
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + max_taps).min(n);
        out.push((start, end));
        if end == n {
            break;
        }
        start += stride;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// One prediction per chunk.
    pub predictions: Vec<FixationPrediction>,
    pub scanpath: Scanpath,
    pub degenerate: bool,
}

/// Predicts the scanpath of one keypress log.
///
/// Logs longer than `max_taps` are cut into overlapping chunks. Each chunk is
/// shifted to start where the log starts; fixations from the overlap come
/// from the later chunk.
pub fn infer_scanpath(model: &EyeModel, log: &KeypressLog, theta: &HumanParams, geom: &ScreenGeometry, mode: DecodeMode) -> Result<Inference> {
    if log.taps.is_empty() {
        return Err(ModelError::EmptyLog);
    }
    theta.validate()?;
    let t0 = log.taps[0].time_ms;
    let mut predictions = Vec::new();
    let mut merged: Vec<Fixation> = Vec::new();
    let mut degenerate = false;
    for (k, (s, e)) in chunk_ranges(log.taps.len(), model.cfg.max_taps).into_iter().enumerate() {
        let shift = log.taps[s].time_ms - t0;
        let mut chunk = log.clone();
        chunk.taps = log.taps[s..e].iter().map(|t| typegaze_core::TapEvent { time_ms: t.time_ms - shift, ..*t }).collect();
        let pred = model.predict(&tap_features(&chunk, geom)?, theta)?;
        let chunk_mode = match mode {
            DecodeMode::Sample { seed } => DecodeMode::Sample { seed: seed.wrapping_add(k as u64) },
            m => m,
        };
        let dec = decode(&pred, geom, chunk_mode);
        degenerate |= dec.degenerate;
        let mut fixes: Vec<Fixation> = dec.fixations.into_iter().map(|f| Fixation { onset_ms: f.onset_ms + shift, ..f }).collect();
        if k > 0 {
            let cut = log.taps[s].time_ms;
            fixes.retain(|f| f.onset_ms >= cut);
            if !fixes.is_empty() {
                merged.retain(|f| f.onset_ms < cut);
            }
            if let (Some(last), Some(next)) = (merged.last_mut(), fixes.first()) {
                last.duration_ms = last.duration_ms.min(next.onset_ms - last.onset_ms);
            }
        }
        merged.extend(fixes);
        predictions.push(pred);
    }
    Ok(Inference { predictions, scanpath: Scanpath { trial_id: log.trial_id.clone(), fixations: merged }, degenerate })
}
