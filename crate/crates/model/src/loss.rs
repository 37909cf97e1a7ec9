//! The four training losses and their sum.
//!
//! Positions are screen fractions, durations seconds, tap times milliseconds.
//! Ground-truth quantities are evaluated with the same routines as the
//! prediction, on constant inputs, so both sides share one soft region
//! membership.

use serde::{Deserialize, Serialize};
use typegaze_autodiff::{Graph, Tensor, Var};
use typegaze_core::{KeypressLog, Scanpath, ScreenGeometry};

use crate::config::LossSwitches;
use crate::error::{ModelError, Result};
use crate::network::Heads;

pub const GUIDANCE_WINDOW_MS: f64 = 350.0;
pub const GUIDANCE_DISTANCE_COEF: f64 = 0.5;
pub const GUIDANCE_COUNT_COEF: f64 = 0.2;
pub const PROOFREAD_COUNT_COEF: f64 = 0.8;
/// Temperature of the sigmoid band membership, pixels.
pub const SOFT_BAND_PX: f64 = 20.0;
/// Added under square roots of squared pixel distances to keep them differentiable at zero.
const DIST_EPS_PX2: f64 = 1e-14;
/// Added to the window-overlap denominator, milliseconds.
const OVERLAP_EPS_MS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub sim: f64,
    pub len: f64,
    pub f: f64,
    pub v: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.total += o.total;
        self.sim += o.sim;
        self.len += o.len;
        self.f += o.f;
        self.v += o.v;
    }

    pub fn scaled(&self, c: f64) -> LossBreakdown {
        LossBreakdown { total: self.total * c, sim: self.sim * c, len: self.len * c, f: self.f * c, v: self.v * c }
    }
}

/// Fixation columns `[n, 1]` plus their onsets in milliseconds.
#[derive(Clone, Copy, Debug)]
pub struct FixVars {
    pub x: Var,
    pub y: Var,
    pub t: Var,
    pub onset_ms: Var,
}

/// Aggregates of the pre-tap windows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceStats {
    /// Overlap-weighted mean gaze-to-tap distance, in screen diagonals.
    pub mean_distance: f64,
    /// Count of (window, fixation) incidences, weighted by soft keyboard membership.
    pub keyboard_count: f64,
}

/// One trial's ground truth in loss units.
#[derive(Clone, Debug)]
pub struct Target {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub onset_ms: Vec<f64>,
    /// `(x px, y px, time ms)` per tap.
    pub taps: Vec<(f64, f64, f64)>,
    pub geom: ScreenGeometry,
    /// None when no fixation overlaps any pre-tap window.
    pub guidance: Option<GuidanceStats>,
    pub text_duration_s: f64,
    pub text_count: f64,
}

impl Target {
    pub fn new(gt: &Scanpath, log: &KeypressLog, geom: &ScreenGeometry, max_fixations: usize) -> Result<Target> {
        if gt.fixations.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        if gt.len() > max_fixations {
            return Err(ModelError::invalid(
                "target",
                format!("{} fixations exceed the {max_fixations} slots", gt.len()),
            ));
        }
        let f = &gt.fixations;
        let mut t = Target {
            x: f.iter().map(|f| f.x / geom.width).collect(),
            y: f.iter().map(|f| f.y / geom.height).collect(),
            t: f.iter().map(|f| f.duration_ms / 1000.0).collect(),
            onset_ms: f.iter().map(|f| f.onset_ms).collect(),
            taps: log.taps.iter().map(|p| (p.x, p.y, p.time_ms)).collect(),
            geom: *geom,
            guidance: None,
            text_duration_s: 0.0,
            text_count: 0.0,
        };
        let mut g = Graph::new();
        let fx = t.constants(&mut g)?;
        if let Some((d, c)) = window_terms(&mut g, &fx, &t.taps, geom)? {
            t.guidance = Some(GuidanceStats { mean_distance: g.value(d).item(), keyboard_count: g.value(c).item() });
        }
        let (dur, cnt) = text_terms(&mut g, &fx, geom)?;
        t.text_duration_s = g.value(dur).item();
        t.text_count = g.value(cnt).item();
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn constants(&self, g: &mut Graph) -> Result<FixVars> {
        let col = |g: &mut Graph, v: &[f64]| -> Result<Var> { Ok(g.constant(Tensor::new(vec![v.len(), 1], v.to_vec())?)) };
        Ok(FixVars { x: col(g, &self.x)?, y: col(g, &self.y)?, t: col(g, &self.t)?, onset_ms: col(g, &self.onset_ms)? })
    }
}

/// The first `n` slots of the heads, with onsets accumulated from predicted durations.
pub fn predicted_fixations(g: &mut Graph, h: &Heads, n: usize) -> Result<FixVars> {
    let x = g.slice(h.mx, 0, 0, n)?;
    let y = g.slice(h.my, 0, 0, n)?;
    let t = g.slice(h.mt, 0, 0, n)?;
    Ok(FixVars { x, y, t, onset_ms: onsets_from_durations(g, t)? })
}

/// Onsets `[n, 1]` in ms of back-to-back fixations starting at 0.
pub fn onsets_from_durations(g: &mut Graph, t: Var) -> Result<Var> {
    let n = g.shape(t)[0];
    let mut tri = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            tri[i * n + j] = 1000.0;
        }
    }
    let tri = g.constant(Tensor::new(vec![n, n], tri)?);
    Ok(g.matmul(tri, t)?)
}

fn row(g: &mut Graph, v: impl Iterator<Item = f64>) -> Result<Var> {
    let v: Vec<f64> = v.collect();
    Ok(g.constant(Tensor::new(vec![1, v.len()], v)?))
}

/// `min(a, b)` and `max(a, b)` through `relu`, broadcasting.
fn min(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let r = g.relu(d);
    Ok(g.sub(a, r)?)
}

fn max(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let r = g.relu(d);
    Ok(g.add(b, r)?)
}

/// Soft membership of the text band for vertical screen fractions `y`.
pub fn soft_text(g: &mut Graph, y: Var, geom: &ScreenGeometry) -> Var {
    let z = g.scale(y, -geom.height / SOFT_BAND_PX);
    let z = g.add_scalar(z, geom.text_area_max_y / SOFT_BAND_PX);
    g.sigmoid(z)
}

/// Soft membership of the keyboard band.
pub fn soft_keyboard(g: &mut Graph, y: Var, geom: &ScreenGeometry) -> Result<Var> {
    let lo = g.scale(y, geom.height / SOFT_BAND_PX);
    let lo = g.add_scalar(lo, -geom.keyboard_min_y / SOFT_BAND_PX);
    let lo = g.sigmoid(lo);
    let hi = g.scale(y, -geom.height / SOFT_BAND_PX);
    let hi = g.add_scalar(hi, geom.keyboard_max_y / SOFT_BAND_PX);
    let hi = g.sigmoid(hi);
    Ok(g.mul(lo, hi)?)
}

/// Pixel distance between screen-fraction points, divided by the diagonal.
fn diag_distance(g: &mut Graph, dx_frac: Var, dy_frac: Var, geom: &ScreenGeometry) -> Result<Var> {
    let dx = g.scale(dx_frac, geom.width);
    let dy = g.scale(dy_frac, geom.height);
    let dx2 = g.square(dx);
    let dy2 = g.square(dy);
    let s = g.add(dx2, dy2)?;
    let s = g.add_scalar(s, DIST_EPS_PX2);
    let r = g.sqrt(s);
    Ok(g.scale(r, 1.0 / geom.diagonal()))
}

/// Mean gaze-to-tap distance and keyboard count over the pre-tap windows, or None
/// when no fixation overlaps any window.
pub fn window_terms(g: &mut Graph, fx: &FixVars, taps: &[(f64, f64, f64)], geom: &ScreenGeometry) -> Result<Option<(Var, Var)>> {
    if taps.is_empty() {
        return Ok(None);
    }
    let tap_t = row(g, taps.iter().map(|p| p.2))?;
    let lo = row(g, taps.iter().map(|p| p.2 - GUIDANCE_WINDOW_MS))?;
    let dur = g.scale(fx.t, 1000.0);
    let ends = g.add(fx.onset_ms, dur)?;
    let a = min(g, ends, tap_t)?;
    let b = max(g, fx.onset_ms, lo)?;
    let d = g.sub(a, b)?;
    let overlap = g.relu(d);
    if g.value(overlap).data().iter().all(|&o| o <= 0.0) {
        return Ok(None);
    }
    let tx = row(g, taps.iter().map(|p| p.0 / geom.width))?;
    let ty = row(g, taps.iter().map(|p| p.1 / geom.height))?;
    let dx = g.sub(fx.x, tx)?;
    let dy = g.sub(fx.y, ty)?;
    let dist = diag_distance(g, dx, dy, geom)?;
    let wd = g.mul(overlap, dist)?;
    let num = g.sum(wd);
    let den = g.sum(overlap);
    let den = g.add_scalar(den, OVERLAP_EPS_MS);
    let mean = g.div(num, den)?;
    // which fixations are active in which window is a plain count; only the region is soft
    let active: Vec<f64> = g.value(overlap).data().iter().map(|&o| if o > 0.0 { 1.0 } else { 0.0 }).collect();
    let incidence = g.constant(Tensor::new(g.shape(overlap).to_vec(), active)?);
    let kb = soft_keyboard(g, fx.y, geom)?;
    let hits = g.mul(incidence, kb)?;
    let count = g.sum(hits);
    Ok(Some((mean, count)))
}

/// Total text-area duration (seconds) and soft text fixation count.
pub fn text_terms(g: &mut Graph, fx: &FixVars, geom: &ScreenGeometry) -> Result<(Var, Var)> {
    let m = soft_text(g, fx.y, geom);
    let wd = g.mul(fx.t, m)?;
    Ok((g.sum(wd), g.sum(m)))
}

/// Index-aligned squared error minus the mean of position, duration and length similarity.
pub fn loss_sim(g: &mut Graph, pred: &FixVars, target: &Target) -> Result<Var> {
    let n = target.len();
    if n == 0 {
        return Err(ModelError::EmptyTarget);
    }
    if g.shape(pred.x)[0] != n {
        return Err(ModelError::invalid("prediction", "slot count differs from the target length"));
    }
    let gt = target.constants(g)?;
    let geom = &target.geom;
    let dx = g.sub(pred.x, gt.x)?;
    let dy = g.sub(pred.y, gt.y)?;
    let dt = g.sub(pred.t, gt.t)?;
    let sq = [g.square(dx), g.square(dy), g.square(dt)];
    let s = g.add(sq[0], sq[1])?;
    let s = g.add(s, sq[2])?;
    let mse = g.mean(s);

    let dist = diag_distance(g, dx, dy, geom)?;
    let pos_dis = g.mean(dist);

    let adt = g.abs(dt);
    let longer = max(g, pred.t, gt.t)?;
    let rel = g.div(adt, longer)?;
    let dur_dis = g.mean(rel);

    let len_dis = if n > 1 {
        let lp = saccade_lengths(g, pred, n, geom)?;
        let lg = saccade_lengths(g, &gt, n, geom)?;
        let d = g.sub(lp, lg)?;
        let d = g.abs(d);
        Some(g.mean(d))
    } else {
        None
    };
    // similarity = 1 - dissimilarity; mean of the three similarities
    let mut dis = g.add(pos_dis, dur_dis)?;
    if let Some(l) = len_dis {
        dis = g.add(dis, l)?;
    }
    let mean_sim = g.scale(dis, -1.0 / 3.0);
    let mean_sim = g.add_scalar(mean_sim, 1.0);
    Ok(g.sub(mse, mean_sim)?)
}

fn saccade_lengths(g: &mut Graph, f: &FixVars, n: usize, geom: &ScreenGeometry) -> Result<Var> {
    let x1 = g.slice(f.x, 0, 1, n)?;
    let x0 = g.slice(f.x, 0, 0, n - 1)?;
    let y1 = g.slice(f.y, 0, 1, n)?;
    let y0 = g.slice(f.y, 0, 0, n - 1)?;
    let dx = g.sub(x1, x0)?;
    let dy = g.sub(y1, y0)?;
    diag_distance(g, dx, dy, geom)
}

/// Mean binary cross-entropy of validity logits against `1` for the first
/// `gt_len` slots and `0` after.
pub fn loss_len(g: &mut Graph, logits: Var, gt_len: usize) -> Result<Var> {
    let n = g.shape(logits)[0];
    if gt_len > n {
        return Err(ModelError::invalid("target", format!("length {gt_len} exceeds {n} slots")));
    }
    let labels: Vec<f64> = (0..n).map(|i| if i < gt_len { 1.0 } else { 0.0 }).collect();
    let y = g.constant(Tensor::new(g.shape(logits).to_vec(), labels)?);
    let sp = g.softplus(logits);
    let ys = g.mul(y, logits)?;
    let bce = g.sub(sp, ys)?;
    Ok(g.mean(bce))
}

/// `|d_pred - 0.5 d_gt| + 0.2 |C_pred - C_gt|` over the pre-tap windows.
pub fn loss_f(g: &mut Graph, pred: &FixVars, target: &Target) -> Result<Var> {
    let Some(gt) = target.guidance else {
        log::debug!("no ground-truth fixation inside any pre-tap window; guidance loss is 0");
        return Ok(g.scalar(0.0));
    };
    let (d, c) = match window_terms(g, pred, &target.taps, &target.geom)? {
        Some(v) => v,
        None => (g.scalar(0.0), g.scalar(0.0)),
    };
    let dd = g.add_scalar(d, -GUIDANCE_DISTANCE_COEF * gt.mean_distance);
    let dd = g.abs(dd);
    let dc = g.add_scalar(c, -gt.keyboard_count);
    let dc = g.abs(dc);
    let dc = g.scale(dc, GUIDANCE_COUNT_COEF);
    Ok(g.add(dd, dc)?)
}

/// `|D_pred - D_gt| + 0.8 |C_pred - C_gt|` over the text area.
pub fn loss_v(g: &mut Graph, pred: &FixVars, target: &Target) -> Result<Var> {
    let (d, c) = text_terms(g, pred, &target.geom)?;
    let dd = g.add_scalar(d, -target.text_duration_s);
    let dd = g.abs(dd);
    let dc = g.add_scalar(c, -target.text_count);
    let dc = g.abs(dc);
    let dc = g.scale(dc, PROOFREAD_COUNT_COEF);
    Ok(g.add(dd, dc)?)
}

/// Sum of the enabled terms; disabled terms are reported as 0.
pub fn total_loss(g: &mut Graph, heads: &Heads, target: &Target, switches: LossSwitches) -> Result<(Var, LossBreakdown)> {
    let n = target.len();
    let pred = predicted_fixations(g, heads, n)?;
    let mut parts = Vec::new();
    let mut b = LossBreakdown::default();
    if switches.sim {
        let v = loss_sim(g, &pred, target)?;
        b.sim = g.value(v).item();
        parts.push(v);
    }
    if switches.len {
        let v = loss_len(g, heads.logit, n)?;
        b.len = g.value(v).item();
        parts.push(v);
    }
    if switches.f {
        let v = loss_f(g, &pred, target)?;
        b.f = g.value(v).item();
        parts.push(v);
    }
    if switches.v {
        let v = loss_v(g, &pred, target)?;
        b.v = g.value(v).item();
        parts.push(v);
    }
    let mut total = match parts.first() {
        Some(&p) => p,
        None => g.scalar(0.0),
    };
    for &p in parts.iter().skip(1) {
        total = g.add(total, p)?;
    }
    b.total = g.value(total).item();
    Ok((total, b))
}
