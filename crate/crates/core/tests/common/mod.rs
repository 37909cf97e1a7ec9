//! Slow reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use typegaze_core::analysis::Trial;
use typegaze_core::{Fixation, KeyboardLayout, Scanpath, ScreenGeometry};

/// Minimum summed cost over every monotone path from (0,0) to (n-1,m-1), by plain recursion.
pub fn exhaustive_path_cost(n: usize, m: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    fn go(i: usize, j: usize, n: usize, m: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
        let here = cost(i, j);
        if i == n - 1 && j == m - 1 {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < n {
            best = best.min(go(i + 1, j, n, m, cost));
        }
        if j + 1 < m {
            best = best.min(go(i, j + 1, n, m, cost));
        }
        if i + 1 < n && j + 1 < m {
            best = best.min(go(i + 1, j + 1, n, m, cost));
        }
        here + best
    }
    go(0, 0, n, m, cost)
}

pub fn brute_dtwd(a: &Scanpath, b: &Scanpath, g: &ScreenGeometry) -> f64 {
    let cost = |i: usize, j: usize| {
        let (p, q) = (a.fixations[i], b.fixations[j]);
        let dx = p.x / g.width - q.x / g.width;
        let dy = p.y / g.height - q.y / g.height;
        let dt = (p.duration_ms - q.duration_ms) / 1000.0;
        (dx * dx + dy * dy + dt * dt).sqrt()
    };
    exhaustive_path_cost(a.len(), b.len(), &cost)
}

/// Saccade vectors in pixels, recomputed from fixation positions.
pub fn saccade_vectors(s: &Scanpath) -> Vec<(f64, f64)> {
    s.fixations.windows(2).map(|w| (w[1].x - w[0].x, w[1].y - w[0].y)).collect()
}

/// Cheapest saccade alignment cost by exhaustive path search.
pub fn brute_alignment_cost(a: &Scanpath, b: &Scanpath) -> f64 {
    let (u, v) = (saccade_vectors(a), saccade_vectors(b));
    exhaustive_path_cost(u.len(), v.len(), &|i, j| (u[i].0 - v[j].0).hypot(u[i].1 - v[j].1))
}

pub fn brute_sted(a: &Scanpath, b: &Scanpath, g: &ScreenGeometry, k: usize) -> f64 {
    let win = |s: &Scanpath, st: usize| -> Vec<(f64, f64)> {
        let o = s.fixations[st];
        (0..k)
            .map(|q| {
                let f = s.fixations[st + q];
                ((f.x - o.x) / g.width, (f.y - o.y) / g.height)
            })
            .collect()
    };
    let dir = |a: &Scanpath, b: &Scanpath| {
        let mut acc = 0.0;
        let na = a.len() - k + 1;
        for i in 0..na {
            let wa = win(a, i);
            let mut best = f64::INFINITY;
            for j in 0..b.len() - k + 1 {
                let wb = win(b, j);
                let d: f64 = wa.iter().zip(&wb).map(|(p, q)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sum();
                best = best.min(d.sqrt());
            }
            acc += best;
        }
        acc / na as f64
    };
    (dir(a, b) + dir(b, a)) / 2.0
}

/// Latest-starting fixation covering `t`; durations summed in floats can overshoot the next onset.
pub fn gaze_at(s: &Scanpath, t: f64) -> Option<&Fixation> {
    s.fixations.iter().rev().find(|f| f.onset_ms <= t && t < f.onset_ms + f.duration_ms)
}

pub fn on_keyboard(f: &Fixation, g: &ScreenGeometry) -> bool {
    f.y >= g.keyboard_min_y && f.y <= g.keyboard_max_y
}

/// Keyboard time and total fixation time inside `[lo, hi)`, or None when no fixation overlaps.
pub fn share(s: &Scanpath, g: &ScreenGeometry, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let mut kb = 0.0;
    let mut all = 0.0;
    for f in &s.fixations {
        let a = f.onset_ms.max(lo);
        let b = (f.onset_ms + f.duration_ms).min(hi);
        if b > a {
            all += b - a;
            if on_keyboard(f, g) {
                kb += b - a;
            }
        }
    }
    (all > 0.0).then_some((kb, all))
}

/// Mean gaze-to-tap distance in pixels and sample count at one offset, by a linear scan.
pub fn distance_at(trials: &[Trial], offset_ms: f64) -> (f64, usize) {
    let mut d = Vec::new();
    for (log, s) in trials {
        for tap in &log.taps {
            if let Some(f) = gaze_at(s, tap.time_ms + offset_ms) {
                d.push((f.x - tap.x).hypot(f.y - tap.y));
            }
        }
    }
    (d.iter().sum::<f64>() / d.len() as f64, d.len())
}

pub type Points = Vec<(f64, f64)>;

/// Per-interval keyboard ratios keyed by (iki, travel distance).
pub fn interval_ratios(trials: &[Trial], g: &ScreenGeometry) -> (Points, Points) {
    let mut by_iki = Vec::new();
    let mut by_travel = Vec::new();
    for (log, s) in trials {
        for w in log.taps.windows(2) {
            if let Some((kb, all)) = share(s, g, w[0].time_ms, w[1].time_ms) {
                by_iki.push((w[1].time_ms - w[0].time_ms, kb / all));
                by_travel.push(((w[1].x - w[0].x).hypot(w[1].y - w[0].y), kb / all));
            }
        }
    }
    (by_iki, by_travel)
}

/// `(bin index, mean, count)` per bin with the open-ended bin as index -1, last.
pub fn bin_means(members: &[(f64, f64)], width: f64, range: f64) -> Vec<(i64, f64, usize)> {
    let mut groups: HashMap<i64, Vec<f64>> = HashMap::new();
    for &(v, r) in members {
        let b = if v >= range { -1 } else { (v / width) as i64 };
        groups.entry(b).or_default().push(r);
    }
    let mut out: Vec<_> = groups.into_iter().map(|(b, rs)| (b, rs.iter().sum::<f64>() / rs.len() as f64, rs.len())).collect();
    out.sort_by_key(|(b, _, _)| if *b < 0 { i64::MAX } else { *b });
    out
}

/// Keyboard time, total time and tap count per key label over the pre-tap windows.
pub fn per_key_totals(trials: &[Trial], layout: &KeyboardLayout, window_ms: f64) -> HashMap<String, (f64, f64, usize)> {
    let mut acc: HashMap<String, (f64, f64, usize)> = HashMap::new();
    for (log, s) in trials {
        for tap in &log.taps {
            let hits: Vec<_> = layout
                .keys
                .iter()
                .filter(|k| tap.x >= k.x && tap.x <= k.x + k.w && tap.y >= k.y && tap.y <= k.y + k.h)
                .collect();
            let Some(k) = hits.iter().min_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))) else { continue };
            if let Some((kb, all)) = share(s, &layout.screen, tap.time_ms - window_ms, tap.time_ms) {
                let e = acc.entry(k.label.clone()).or_default();
                e.0 += kb;
                e.1 += all;
            }
            acc.entry(k.label.clone()).or_default().2 += 1;
        }
    }
    acc
}
