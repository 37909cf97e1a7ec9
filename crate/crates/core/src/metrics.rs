//! Scanpath similarity (DTWD, STED, MultiMatch) and gaze statistics.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{region_of, Region, ScreenGeometry};
use crate::types::Scanpath;

pub const DEFAULT_STED_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedFixation {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

pub fn normalize(s: &Scanpath, geom: &ScreenGeometry) -> Vec<NormalizedFixation> {
    s.fixations
        .iter()
        .map(|f| NormalizedFixation { x: f.x / geom.width, y: f.y / geom.height, t: f.duration_ms / 1000.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub cost: f64,
    /// Matched index pairs from (0, 0) to (n-1, m-1).
    pub path: Vec<(usize, usize)>,
}

/// Monotone alignment minimizing the summed local cost, steps (1,0), (0,1), (1,1).
/// Backtracking prefers the diagonal, then advancing the first sequence.
pub fn align(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Alignment {
    assert!(n > 0 && m > 0, "align needs non-empty sequences");
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut b = f64::INFINITY;
                if i > 0 && j > 0 {
                    b = b.min(acc[(i - 1) * m + j - 1]);
                }
                if i > 0 {
                    b = b.min(acc[(i - 1) * m + j]);
                }
                if j > 0 {
                    b = b.min(acc[i * m + j - 1]);
                }
                b
            };
            acc[i * m + j] = best + cost(i, j);
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Alignment { cost: acc[n * m - 1], path }
}

fn non_empty(s: &Scanpath) -> Result<()> {
    if s.is_empty() {
        Err(CoreError::EmptyScanpath)
    } else {
        Ok(())
    }
}

/// Accumulated DTW cost over (x/width, y/height, duration in s) with Euclidean local cost.
pub fn dtwd(a: &Scanpath, b: &Scanpath, geom: &ScreenGeometry) -> Result<f64> {
    non_empty(a)?;
    non_empty(b)?;
    let (na, nb) = (normalize(a, geom), normalize(b, geom));
    Ok(align(na.len(), nb.len(), |i, j| {
        let (p, q) = (na[i], nb[j]);
        ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.t - q.t).powi(2)).sqrt()
    })
    .cost)
}

/// Length-k windows of the normalized trail, each shifted so its first point is the origin.
pub fn sted_windows(s: &Scanpath, geom: &ScreenGeometry, k: usize) -> Vec<Vec<f64>> {
    let n = normalize(s, geom);
    if k == 0 || n.len() < k {
        return Vec::new();
    }
    (0..=n.len() - k)
        .map(|st| {
            let o = n[st];
            n[st..st + k].iter().flat_map(|p| [p.x - o.x, p.y - o.y]).collect()
        })
        .collect()
}

fn mean_min_distance(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|w| {
            to.iter()
                .map(|v| w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

pub fn sted(a: &Scanpath, b: &Scanpath, geom: &ScreenGeometry, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(CoreError::invalid("sted", "embedding dimension must be at least 1"));
    }
    for s in [a, b] {
        if s.len() < k {
            return Err(CoreError::TooShort { what: "sted scanpath", need: k, got: s.len() });
        }
    }
    let (wa, wb) = (sted_windows(a, geom, k), sted_windows(b, geom, k));
    Ok(0.5 * (mean_min_distance(&wa, &wb) + mean_min_distance(&wb, &wa)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiMatchScores {
    pub shape: f64,
    pub direction: f64,
    pub length: f64,
    pub position: f64,
    pub duration: f64,
}

impl MultiMatchScores {
    pub fn to_array(&self) -> [f64; 5] {
        [self.shape, self.direction, self.length, self.position, self.duration]
    }
}

pub fn saccades(s: &Scanpath) -> Vec<(f64, f64)> {
    s.fixations.windows(2).map(|w| (w[1].x - w[0].x, w[1].y - w[0].y)).collect()
}

fn saccades_checked(s: &Scanpath) -> Result<Vec<(f64, f64)>> {
    if s.len() < 2 {
        return Err(CoreError::TooShort { what: "multimatch scanpath", need: 2, got: s.len() });
    }
    Ok(saccades(s))
}

/// The saccade-vector alignment used by [`multimatch`]; local cost is |u - v| in pixels.
pub fn multimatch_alignment(a: &Scanpath, b: &Scanpath) -> Result<Alignment> {
    let (u, v) = (saccades_checked(a)?, saccades_checked(b)?);
    Ok(align(u.len(), v.len(), |i, j| (u[i].0 - v[j].0).hypot(u[i].1 - v[j].1)))
}

fn angle_between(u: (f64, f64), v: (f64, f64)) -> f64 {
    let (nu, nv) = (u.0.hypot(u.1), v.0.hypot(v.1));
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let cross = u.0 * v.1 - u.1 * v.0;
    let dot = u.0 * v.0 + u.1 * v.1;
    cross.abs().atan2(dot)
}

/// Five similarities in [0,1] over DP-aligned saccades. Position and duration compare the
/// fixation each aligned saccade starts from. Ties between equal-cost alignments are broken
/// by a fixed preference order, so swapping arguments can differ only on exact cost ties.
pub fn multimatch(a: &Scanpath, b: &Scanpath, geom: &ScreenGeometry) -> Result<MultiMatchScores> {
    let al = multimatch_alignment(a, b)?;
    let (u, v) = (saccades(a), saccades(b));
    let diag = geom.diagonal();
    let mut sum = [0.0; 5];
    for &(i, j) in &al.path {
        let (su, sv) = (u[i], v[j]);
        let (fa, fb) = (a.fixations[i], b.fixations[j]);
        sum[0] += (su.0 - sv.0).hypot(su.1 - sv.1) / diag;
        sum[1] += angle_between(su, sv) / std::f64::consts::PI;
        sum[2] += (su.0.hypot(su.1) - sv.0.hypot(sv.1)).abs() / diag;
        sum[3] += (fa.x - fb.x).hypot(fa.y - fb.y) / diag;
        let dmax = fa.duration_ms.max(fb.duration_ms);
        sum[4] += if dmax > 0.0 { (fa.duration_ms - fb.duration_ms).abs() / dmax } else { 0.0 };
    }
    let n = al.path.len() as f64;
    let sim = |k: usize| (1.0 - sum[k] / n).clamp(0.0, 1.0);
    Ok(MultiMatchScores { shape: sim(0), direction: sim(1), length: sim(2), position: sim(3), duration: sim(4) })
}

pub fn fixation_count(s: &Scanpath) -> Result<usize> {
    non_empty(s)?;
    Ok(s.len())
}

pub fn mean_fixation_duration(s: &Scanpath) -> Result<f64> {
    non_empty(s)?;
    Ok(s.fixations.iter().map(|f| f.duration_ms).sum::<f64>() / s.len() as f64)
}

/// Consecutive fixation pairs going keyboard to text.
pub fn gaze_shifts(s: &Scanpath, geom: &ScreenGeometry) -> usize {
    s.fixations
        .windows(2)
        .filter(|w| {
            region_of(w[0].x, w[0].y, geom) == Region::Keyboard && region_of(w[1].x, w[1].y, geom) == Region::Text
        })
        .count()
}

fn region_time_ratio(s: &Scanpath, geom: &ScreenGeometry, region: Region) -> Result<f64> {
    let total: f64 = s.fixations.iter().map(|f| f.duration_ms).sum();
    if !(total > 0.0) {
        return Err(CoreError::ZeroDuration);
    }
    let inside: f64 = s
        .fixations
        .iter()
        .filter(|f| region_of(f.x, f.y, geom) == region)
        // an empty f64 sum is -0.0
        .fold(0.0, |acc, f| acc + f.duration_ms);
    Ok(inside / total)
}

pub fn gaze_on_keyboard_ratio(s: &Scanpath, geom: &ScreenGeometry) -> Result<f64> {
    region_time_ratio(s, geom, Region::Keyboard)
}

pub fn proofreading_rate(s: &Scanpath, geom: &ScreenGeometry) -> Result<f64> {
    region_time_ratio(s, geom, Region::Text)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeStats {
    pub fixation_count: f64,
    pub mean_fixation_duration: f64,
    pub gaze_shifts: f64,
    pub keyboard_ratio: f64,
    pub proofreading_rate: f64,
}

pub fn gaze_stats(s: &Scanpath, geom: &ScreenGeometry) -> Result<GazeStats> {
    Ok(GazeStats {
        fixation_count: fixation_count(s)? as f64,
        mean_fixation_duration: mean_fixation_duration(s)?,
        gaze_shifts: gaze_shifts(s, geom) as f64,
        keyboard_ratio: gaze_on_keyboard_ratio(s, geom)?,
        proofreading_rate: proofreading_rate(s, geom)?,
    })
}

pub const EVAL_COLUMNS: [&str; 13] = [
    "trial_id",
    "dtwd",
    "sted",
    "mm_shape",
    "mm_direction",
    "mm_length",
    "mm_position",
    "mm_duration",
    "fixation_count",
    "mean_fixation_duration",
    "gaze_shifts",
    "keyboard_ratio",
    "proofreading_rate",
];

/// One evaluation row; similarity values that are undefined for very short paths are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialEval {
    pub trial_id: String,
    pub values: [f64; 12],
}

/// STED uses `min(k, |pred|, |gt|)` so short predictions still get a value.
pub fn evaluate_trial(pred: &Scanpath, gt: &Scanpath, geom: &ScreenGeometry, k: usize) -> Result<TrialEval> {
    let k_eff = k.min(pred.len()).min(gt.len()).max(1);
    let mm = multimatch(pred, gt, geom)
        .map(|m| m.to_array())
        .unwrap_or([f64::NAN; 5]);
    let st = gaze_stats(pred, geom)?;
    Ok(TrialEval {
        trial_id: gt.trial_id.clone(),
        values: [
            dtwd(pred, gt, geom)?,
            sted(pred, gt, geom, k_eff)?,
            mm[0],
            mm[1],
            mm[2],
            mm[3],
            mm[4],
            st.fixation_count,
            st.mean_fixation_duration,
            st.gaze_shifts,
            st.keyboard_ratio,
            st.proofreading_rate,
        ],
    })
}

/// CSV with one row per trial plus a final `summary` row of `Mean(SD)` cells (NaN cells skipped).
pub fn eval_csv(rows: &[TrialEval]) -> String {
    let mut s = EVAL_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.trial_id);
        for v in r.values {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s.push_str("summary");
    for c in 0..12 {
        let col: Vec<f64> = rows.iter().map(|r| r.values[c]).filter(|v| v.is_finite()).collect();
        let (m, sd) = mean_sd(&col);
        s.push_str(&format!(",{m:.2}({sd:.2})"));
    }
    s.push('\n');
    s
}
