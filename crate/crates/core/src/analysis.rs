//! Eye-hand coordination analyses over paired keypress logs and scanpaths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{region_of, KeyboardLayout, Region, ScreenGeometry, BACKSPACE, SPACE};
use crate::metrics::mean_sd;
use crate::types::{Fixation, KeypressLog, Scanpath};
use crate::typing::interkey_intervals;

pub const CURVE_WINDOW_MS: (f64, f64) = (-1000.0, 500.0);
pub const CURVE_STEP_MS: f64 = 50.0;
pub const IKI_BIN_MS: f64 = 100.0;
pub const IKI_RANGE_MS: f64 = 1000.0;
pub const TRAVEL_BIN_PX: f64 = 50.0;
pub const TRAVEL_RANGE_PX: f64 = 1000.0;
pub const PRE_TAP_WINDOW_MS: f64 = 350.0;

pub type Trial<'a> = (&'a KeypressLog, &'a Scanpath);

/// Fixation whose `[onset, onset + duration)` contains `t`.
pub fn active_fixation(s: &Scanpath, t: f64) -> Option<&Fixation> {
    let idx = s.fixations.partition_point(|f| f.onset_ms <= t);
    let f = s.fixations.get(idx.checked_sub(1)?)?;
    (t < f.end_ms()).then_some(f)
}

fn overlap(f: &Fixation, lo: f64, hi: f64) -> f64 {
    (f.end_ms().min(hi) - f.onset_ms.max(lo)).max(0.0)
}

/// Total fixation time and keyboard fixation time inside `[lo, hi)`.
pub fn window_time(s: &Scanpath, geom: &ScreenGeometry, lo: f64, hi: f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut kb = 0.0;
    for f in &s.fixations {
        let ov = overlap(f, lo, hi);
        if ov > 0.0 {
            total += ov;
            if region_of(f.x, f.y, geom) == Region::Keyboard {
                kb += ov;
            }
        }
    }
    (total, kb)
}

fn sorted<'a>(trials: &[Trial<'a>]) -> Vec<Trial<'a>> {
    let mut v = trials.to_vec();
    v.sort_by(|a, b| a.0.trial_id.cmp(&b.0.trial_id));
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub offset_ms: f64,
    pub mean_distance_px: f64,
    pub samples: usize,
}

pub fn distance_curve_grid(window: (f64, f64), step: f64) -> Vec<f64> {
    let n = ((window.1 - window.0) / step).round() as i64;
    (0..=n).map(|k| window.0 + step * k as f64).collect()
}

/// Mean gaze-to-tap distance at each offset, pooling per-tap samples across trials.
pub fn gaze_tap_distance_curve(trials: &[Trial], window: (f64, f64), step: f64) -> Result<Vec<CurvePoint>> {
    let grid = distance_curve_grid(window, step);
    let mut sum = vec![0.0; grid.len()];
    let mut cnt = vec![0usize; grid.len()];
    for (log, s) in sorted(trials) {
        for tap in &log.taps {
            for (k, &o) in grid.iter().enumerate() {
                if let Some(f) = active_fixation(s, tap.time_ms + o) {
                    sum[k] += (f.x - tap.x).hypot(f.y - tap.y);
                    cnt[k] += 1;
                }
            }
        }
    }
    if cnt.iter().all(|&c| c == 0) {
        return Err(CoreError::NoOverlap);
    }
    Ok(grid
        .iter()
        .zip(sum.iter().zip(&cnt))
        .filter(|(_, (_, &c))| c > 0)
        .map(|(&o, (&s, &c))| CurvePoint { offset_ms: o, mean_distance_px: s / c as f64, samples: c })
        .collect())
}

/// Offset of the smallest mean distance within `[lo, hi]`.
pub fn curve_argmin(curve: &[CurvePoint], lo: f64, hi: f64) -> Option<CurvePoint> {
    curve
        .iter()
        .filter(|p| p.offset_ms >= lo && p.offset_ms <= hi)
        .copied()
        .min_by(|a, b| a.mean_distance_px.total_cmp(&b.mean_distance_px))
}

/// True when some point in `[lo, hi]` lies more than `frac` below the mean of that window.
pub fn has_dip(curve: &[CurvePoint], lo: f64, hi: f64, frac: f64) -> bool {
    let w: Vec<f64> = curve
        .iter()
        .filter(|p| p.offset_ms >= lo && p.offset_ms <= hi)
        .map(|p| p.mean_distance_px)
        .collect();
    if w.is_empty() {
        return false;
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().any(|&d| d < mean * (1.0 - frac))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBin {
    pub lo: f64,
    /// `None` for the overflow bin.
    pub hi: Option<f64>,
    pub mean_ratio: f64,
    pub count: usize,
}

fn bin_index(v: f64, width: f64, range: f64) -> usize {
    let overflow = (range / width).round() as usize;
    if v >= range {
        overflow
    } else {
        ((v / width).floor() as usize).min(overflow - 1)
    }
}

fn binned(members: &[(f64, f64)], width: f64, range: f64) -> Vec<RatioBin> {
    let nbins = (range / width).round() as usize + 1;
    let mut sum = vec![0.0; nbins];
    let mut cnt = vec![0usize; nbins];
    for &(v, r) in members {
        let b = bin_index(v, width, range);
        sum[b] += r;
        cnt[b] += 1;
    }
    (0..nbins)
        .filter(|&b| cnt[b] > 0)
        .map(|b| RatioBin {
            lo: b as f64 * width,
            hi: (b + 1 < nbins).then(|| (b + 1) as f64 * width),
            mean_ratio: sum[b] / cnt[b] as f64,
            count: cnt[b],
        })
        .collect()
}

/// Per-gap `(key, keyboard ratio)` members; gaps without any fixation time are dropped.
pub fn gap_members(trials: &[Trial], geom: &ScreenGeometry, key: impl Fn(&KeypressLog, usize) -> f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (log, s) in sorted(trials) {
        for i in 0..log.taps.len().saturating_sub(1) {
            let (total, kb) = window_time(s, geom, log.taps[i].time_ms, log.taps[i + 1].time_ms);
            if total > 0.0 {
                out.push((key(log, i), kb / total));
            }
        }
    }
    out
}

fn gap_iki(log: &KeypressLog, i: usize) -> f64 {
    log.taps[i + 1].time_ms - log.taps[i].time_ms
}

fn gap_travel(log: &KeypressLog, i: usize) -> f64 {
    let (a, b) = (log.taps[i], log.taps[i + 1]);
    (b.x - a.x).hypot(b.y - a.y)
}

pub fn ratio_by_iki(trials: &[Trial], geom: &ScreenGeometry, width: f64, range: f64) -> Vec<RatioBin> {
    binned(&gap_members(trials, geom, gap_iki), width, range)
}

pub fn ratio_by_travel(trials: &[Trial], geom: &ScreenGeometry, width: f64, range: f64) -> Vec<RatioBin> {
    binned(&gap_members(trials, geom, gap_travel), width, range)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyAttention {
    pub ratio: f64,
    pub keyboard_ms: f64,
    pub total_ms: f64,
    pub taps: usize,
}

/// Keyboard share of fixation time in the `window_ms` before each tap, pooled per key label.
pub fn per_key_attention(trials: &[Trial], layout: &KeyboardLayout, window_ms: f64) -> BTreeMap<String, KeyAttention> {
    let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (log, s) in sorted(trials) {
        for tap in &log.taps {
            let Some(key) = layout.key_at(tap.x, tap.y) else { continue };
            let (total, kb) = window_time(s, &layout.screen, tap.time_ms - window_ms, tap.time_ms);
            let e = acc.entry(key.label.clone()).or_insert((0.0, 0.0, 0));
            e.0 += kb;
            e.1 += total;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .filter(|(_, (_, total, _))| *total > 0.0)
        .map(|(k, (kb, total, taps))| (k, KeyAttention { ratio: kb / total, keyboard_ms: kb, total_ms: total, taps }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedAttention {
    pub space: Option<f64>,
    pub backspace: Option<f64>,
    pub other: Option<f64>,
}

/// Time-weighted ratios for space, backspace and all remaining keys.
pub fn grouped_attention(per_key: &BTreeMap<String, KeyAttention>) -> GroupedAttention {
    let group = |pred: &dyn Fn(&str) -> bool| {
        let (kb, total) = per_key
            .iter()
            .filter(|(k, _)| pred(k))
            .fold((0.0, 0.0), |(a, b), (_, v)| (a + v.keyboard_ms, b + v.total_ms));
        (total > 0.0).then(|| kb / total)
    };
    GroupedAttention {
        space: group(&|k| k == SPACE),
        backspace: group(&|k| k == BACKSPACE),
        other: group(&|k| k != SPACE && k != BACKSPACE),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkiStats {
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub count: usize,
}

pub fn iki_stats(trials: &[Trial]) -> IkiStats {
    let all: Vec<f64> = sorted(trials).iter().flat_map(|(l, _)| interkey_intervals(l).values).collect();
    let (mean_ms, sd_ms) = mean_sd(&all);
    IkiStats { mean_ms, sd_ms, count: all.len() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationReport {
    pub distance_curve: Vec<CurvePoint>,
    pub ratio_by_iki: Vec<RatioBin>,
    pub ratio_by_travel: Vec<RatioBin>,
    pub per_key_ratio: BTreeMap<String, KeyAttention>,
    pub grouped_key_ratio: GroupedAttention,
    pub iki_stats: IkiStats,
}

pub fn analyze(trials: &[Trial], layout: &KeyboardLayout) -> Result<CoordinationReport> {
    if trials.is_empty() {
        return Err(CoreError::invalid("analysis input", "no trials"));
    }
    for (log, s) in trials {
        if log.trial_id != s.trial_id {
            return Err(CoreError::invalid(
                "analysis input",
                format!("keylog {} paired with scanpath {}", log.trial_id, s.trial_id),
            ));
        }
    }
    let geom = &layout.screen;
    let per_key_ratio = per_key_attention(trials, layout, PRE_TAP_WINDOW_MS);
    Ok(CoordinationReport {
        distance_curve: gaze_tap_distance_curve(trials, CURVE_WINDOW_MS, CURVE_STEP_MS)?,
        ratio_by_iki: ratio_by_iki(trials, geom, IKI_BIN_MS, IKI_RANGE_MS),
        ratio_by_travel: ratio_by_travel(trials, geom, TRAVEL_BIN_PX, TRAVEL_RANGE_PX),
        grouped_key_ratio: grouped_attention(&per_key_ratio),
        per_key_ratio,
        iki_stats: iki_stats(trials),
    })
}

fn bins_csv(bins: &[RatioBin], unit: &str) -> String {
    let mut s = format!("bin_lo_{unit},bin_hi_{unit},mean_keyboard_ratio,count\n");
    for b in bins {
        let hi = b.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".into());
        s.push_str(&format!("{},{hi},{},{}\n", b.lo, b.mean_ratio, b.count));
    }
    s
}

impl CoordinationReport {
    /// `(file name, contents)` for each figure table.
    pub fn csv_files(&self) -> Vec<(&'static str, String)> {
        let mut curve = String::from("offset_ms,mean_distance_px,samples\n");
        for p in &self.distance_curve {
            curve.push_str(&format!("{},{},{}\n", p.offset_ms, p.mean_distance_px, p.samples));
        }
        let mut keys = String::from("key,ratio,keyboard_ms,total_ms,taps\n");
        for (k, a) in &self.per_key_ratio {
            keys.push_str(&format!("{k},{},{},{},{}\n", a.ratio, a.keyboard_ms, a.total_ms, a.taps));
        }
        vec![
            ("distance_curve.csv", curve),
            ("ratio_by_iki.csv", bins_csv(&self.ratio_by_iki, "ms")),
            ("ratio_by_travel.csv", bins_csv(&self.ratio_by_travel, "px")),
            ("per_key_ratio.csv", keys),
        ]
    }
}
