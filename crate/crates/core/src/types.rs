use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::ScreenGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapEvent {
    pub x: f64,
    pub y: f64,
    pub time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypressLog {
    pub trial_id: String,
    pub user_id: String,
    pub reference_text: String,
    pub taps: Vec<TapEvent>,
}

impl KeypressLog {
    pub fn validate(&self, geom: &ScreenGeometry) -> Result<()> {
        let bad = |msg: String| Err(CoreError::invalid("keypress log", format!("{}: {msg}", self.trial_id)));
        if self.taps.is_empty() {
            return bad("no taps".into());
        }
        for (i, t) in self.taps.iter().enumerate() {
            if !(t.x.is_finite() && t.y.is_finite() && t.time_ms.is_finite()) || !geom.contains(t.x, t.y) {
                return bad(format!("tap {i} at ({}, {}) is off screen", t.x, t.y));
            }
            if t.time_ms < 0.0 {
                return bad(format!("tap {i} has negative time"));
            }
            if i > 0 && t.time_ms <= self.taps[i - 1].time_ms {
                return bad(format!("tap {i} is not later than tap {}", i - 1));
            }
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> f64 {
        match (self.taps.first(), self.taps.last()) {
            (Some(a), Some(b)) => b.time_ms - a.time_ms,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub duration_ms: f64,
    pub onset_ms: f64,
}

impl Fixation {
    pub fn end_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    pub trial_id: String,
    pub fixations: Vec<Fixation>,
}

impl Scanpath {
    /// Builds a scanpath from (x, y, duration) triples laid end to end from time 0.
    pub fn contiguous(trial_id: impl Into<String>, pts: &[(f64, f64, f64)]) -> Scanpath {
        let mut t = 0.0;
        let fixations = pts
            .iter()
            .map(|&(x, y, d)| {
                let f = Fixation { x, y, duration_ms: d, onset_ms: t };
                t += d;
                f
            })
            .collect();
        Scanpath { trial_id: trial_id.into(), fixations }
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    pub fn validate(&self, geom: &ScreenGeometry) -> Result<()> {
        let bad = |msg: String| Err(CoreError::invalid("scanpath", format!("{}: {msg}", self.trial_id)));
        if self.fixations.is_empty() {
            return bad("no fixations".into());
        }
        for (i, f) in self.fixations.iter().enumerate() {
            if !(f.x.is_finite() && f.y.is_finite()) || !geom.contains(f.x, f.y) {
                return bad(format!("fixation {i} at ({}, {}) is off screen", f.x, f.y));
            }
            if !(f.duration_ms > 0.0 && f.duration_ms.is_finite()) {
                return bad(format!("fixation {i} has non-positive duration"));
            }
            if !f.onset_ms.is_finite() || (i > 0 && f.onset_ms <= self.fixations[i - 1].onset_ms) {
                return bad(format!("fixation {i} onset is not increasing"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypingMetrics {
    pub wpm: f64,
    pub mean_iki_ms: f64,
    pub error_rate: f64,
    pub backspace_count: f64,
}

impl TypingMetrics {
    pub fn to_array(&self) -> [f64; 4] {
        [self.wpm, self.mean_iki_ms, self.error_rate, self.backspace_count]
    }

    /// Component-wise mean; `None` for an empty slice.
    pub fn mean(all: &[TypingMetrics]) -> Option<TypingMetrics> {
        if all.is_empty() {
            return None;
        }
        let mut acc = [0.0; 4];
        for m in all {
            for (a, v) in acc.iter_mut().zip(m.to_array()) {
                *a += v;
            }
        }
        let n = all.len() as f64;
        Some(TypingMetrics {
            wpm: acc[0] / n,
            mean_iki_ms: acc[1] / n,
            error_rate: acc[2] / n,
            backspace_count: acc[3] / n,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanParams {
    pub e_k: f64,
    pub f_k: f64,
    pub lambda: f64,
}

impl Default for HumanParams {
    fn default() -> Self {
        HumanParams { e_k: 0.5, f_k: 0.5, lambda: 0.5 }
    }
}

impl HumanParams {
    pub fn new(e_k: f64, f_k: f64, lambda: f64) -> Result<HumanParams> {
        let p = HumanParams { e_k, f_k, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(CoreError::invalid("human parameters", format!("{self:?} outside [0,1]")))
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.e_k, self.f_k, self.lambda]
    }

    pub fn from_array(a: [f64; 3]) -> HumanParams {
        HumanParams { e_k: a[0], f_k: a[1], lambda: a[2] }
    }

    /// Parses `"e,f,l"`.
    pub fn parse(s: &str) -> Result<HumanParams> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(CoreError::invalid("human parameters", format!("expected e,f,l but got {s:?}")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| CoreError::invalid("human parameters", format!("not a number: {p:?}")))?;
        }
        HumanParams::new(v[0], v[1], v[2])
    }
}
