//! Text decoding and aggregate typing performance.

use crate::error::{CoreError, Result};
use crate::geometry::{KeyboardLayout, BACKSPACE};
use crate::types::{KeypressLog, TypingMetrics};

pub const CHARS_PER_WORD: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Intervals {
    pub values: Vec<f64>,
    /// Set when the log has fewer than two taps.
    pub degenerate: bool,
}

pub fn interkey_intervals(log: &KeypressLog) -> Intervals {
    let values: Vec<f64> = log.taps.windows(2).map(|w| w[1].time_ms - w[0].time_ms).collect();
    Intervals { degenerate: log.taps.len() < 2, values }
}

pub fn decode_text(log: &KeypressLog, layout: &KeyboardLayout) -> String {
    let mut buf = String::new();
    for t in &log.taps {
        let Some(key) = layout.key_at(t.x, t.y) else { continue };
        if key.label == BACKSPACE {
            buf.pop();
        } else if let Some(c) = key.char() {
            buf.push(c);
        }
    }
    buf
}

pub fn backspace_count(log: &KeypressLog, layout: &KeyboardLayout) -> usize {
    log.taps
        .iter()
        .filter(|t| layout.key_at(t.x, t.y).is_some_and(|k| k.label == BACKSPACE))
        .count()
}

/// Character-level edit distance with unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn error_rate(typed: &str, reference: &str) -> f64 {
    let n = reference.chars().count().max(1) as f64;
    (levenshtein(typed, reference) as f64 / n).clamp(0.0, 1.0)
}

pub fn compute_typing_metrics(log: &KeypressLog, layout: &KeyboardLayout) -> Result<TypingMetrics> {
    if log.reference_text.is_empty() {
        return Err(CoreError::invalid("keypress log", format!("{}: empty reference text", log.trial_id)));
    }
    let duration = log.duration_ms();
    if !(duration > 0.0) {
        return Err(CoreError::ZeroDuration);
    }
    let typed = decode_text(log, layout);
    let iki = interkey_intervals(log);
    let mean_iki_ms = iki.values.iter().sum::<f64>() / iki.values.len() as f64;
    Ok(TypingMetrics {
        wpm: typed.chars().count() as f64 / CHARS_PER_WORD / (duration / 60_000.0),
        mean_iki_ms,
        error_rate: error_rate(&typed, &log.reference_text),
        backspace_count: backspace_count(log, layout) as f64,
    })
}
