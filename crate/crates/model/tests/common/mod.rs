//! Fixtures and finite-difference drivers for the loss terms.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typegaze_autodiff::{grad_check, AutodiffError, Graph, Tensor, Var};
use typegaze_core::{KeypressLog, Scanpath, ScreenGeometry, TapEvent};
use typegaze_model::loss::{loss_f, loss_len, loss_sim, loss_v, predicted_fixations, total_loss, Target};
use typegaze_model::network::{Heads, HEAD_WIDTH};
use typegaze_model::LossSwitches;

pub const EPS: f64 = 1e-5;

pub fn geom() -> ScreenGeometry {
    ScreenGeometry::default()
}

pub fn log_of(taps: &[(f64, f64, f64)]) -> KeypressLog {
    KeypressLog {
        trial_id: "t".into(),
        user_id: "u".into(),
        reference_text: "x".into(),
        taps: taps.iter().map(|&(x, y, t)| TapEvent { x, y, time_ms: t }).collect(),
    }
}

/// A keyboard-heavy scanpath with one text fixation and taps spread over it.
pub fn example() -> (Scanpath, KeypressLog) {
    let sp = Scanpath::contiguous(
        "t",
        &[(540.0, 1500.0, 320.0), (300.0, 1650.0, 250.0), (500.0, 200.0, 400.0), (800.0, 1400.0, 280.0), (610.0, 1800.0, 300.0)],
    );
    let log = log_of(&[(320.0, 1600.0, 400.0), (700.0, 1450.0, 900.0), (200.0, 1700.0, 1300.0), (900.0, 1500.0, 1500.0)]);
    (sp, log)
}

pub fn col(g: &mut Graph, v: &[f64]) -> Var {
    g.constant(Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap())
}

/// Heads whose means equal the target and whose logits are `logit` for real slots, `-logit` after.
pub fn heads_at(g: &mut Graph, t: &Target, slots: usize, logit: f64) -> Heads {
    let pad = |v: &[f64], fill: f64| -> Vec<f64> { v.iter().copied().chain(std::iter::repeat(fill)).take(slots).collect() };
    let l: Vec<f64> = (0..slots).map(|i| if i < t.len() { logit } else { -logit }).collect();
    let ones = vec![0.1; slots];
    Heads {
        mx: col(g, &pad(&t.x, 0.5)),
        my: col(g, &pad(&t.y, 0.5)),
        sx: col(g, &ones),
        sy: col(g, &ones),
        mt: col(g, &pad(&t.t, 0.2)),
        st: col(g, &ones),
        logit: col(g, &l),
    }
}

pub fn random_trial(rng: &mut ChaCha8Rng, n: usize, taps: usize) -> (Scanpath, KeypressLog) {
    let pts: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let y = if rng.random_bool(0.25) { rng.random_range(20.0..380.0) } else { rng.random_range(1250.0..1960.0) };
            (rng.random_range(10.0..1070.0), y, rng.random_range(120.0..700.0))
        })
        .collect();
    let sp = Scanpath::contiguous("t", &pts);
    let end = sp.fixations.last().unwrap().end_ms();
    let mut times: Vec<f64> = (0..taps).map(|_| rng.random_range(0.0..end)).collect();
    times.sort_by(f64::total_cmp);
    let taps: Vec<(f64, f64, f64)> =
        times.iter().map(|&t| (rng.random_range(10.0..1070.0), rng.random_range(1250.0..1960.0), t)).collect();
    (sp, log_of(&taps))
}

pub type Term = fn(&mut Graph, &Heads, &Target) -> typegaze_model::Result<Var>;

pub fn terms() -> Vec<(&'static str, Term)> {
    vec![
        ("sim", |g, h, t| {
            let p = predicted_fixations(g, h, t.len())?;
            loss_sim(g, &p, t)
        }),
        ("len", |g, h, t| loss_len(g, h.logit, t.len())),
        ("f", |g, h, t| {
            let p = predicted_fixations(g, h, t.len())?;
            loss_f(g, &p, t)
        }),
        ("v", |g, h, t| {
            let p = predicted_fixations(g, h, t.len())?;
            loss_v(g, &p, t)
        }),
        ("total", |g, h, t| Ok(total_loss(g, h, t, LossSwitches::default())?.0)),
    ]
}

pub struct TermError {
    pub name: &'static str,
    pub case: usize,
    pub worst: f64,
    pub analytic: f64,
    pub numeric: f64,
}

fn invalid(op: &'static str) -> impl Fn(typegaze_model::ModelError) -> AutodiffError {
    move |e| AutodiffError::Invalid { op, msg: e.to_string() }
}

/// Worst case per loss term over `cases` random trials, differentiating through the raw head outputs.
pub fn term_grad_errors(seed: u64, cases: usize) -> typegaze_autodiff::Result<Vec<TermError>> {
    let geom = geom();
    let mut out = Vec::new();
    for (name, term) in terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = TermError { name, case: 0, worst: 0.0, analytic: 0.0, numeric: 0.0 };
        for case in 0..cases {
            let slots = rng.random_range(2..7);
            let n = rng.random_range(1..=slots);
            let k = rng.random_range(1..6);
            let (sp, log) = random_trial(&mut rng, n, k);
            let t = Target::new(&sp, &log, &geom, slots).map_err(invalid("target"))?;
            // positions near the band edges so the soft memberships have slope
            let raw: Vec<f64> = (0..slots * HEAD_WIDTH)
                .map(|i| match i % HEAD_WIDTH {
                    1 => rng.random_range(-1.7..1.8),
                    4 => rng.random_range(-2.0..0.5),
                    _ => rng.random_range(-2.0..2.0),
                })
                .collect();
            let raw = Tensor::new(vec![slots, HEAD_WIDTH], raw)?;
            let r = grad_check(
                |g, x| {
                    let h = Heads::from_raw(g, x).map_err(invalid("heads"))?;
                    term(g, &h, &t).map_err(invalid("loss"))
                },
                &raw,
                EPS,
            )?;
            if r.max_rel_error > worst.worst {
                let k = (0..r.analytic.len())
                    .max_by(|&a, &b| (r.analytic[a] - r.numeric[a]).abs().total_cmp(&(r.analytic[b] - r.numeric[b]).abs()))
                    .unwrap_or(0);
                worst = TermError { name, case, worst: r.max_rel_error, analytic: r.analytic[k], numeric: r.numeric[k] };
            }
        }
        out.push(worst);
    }
    Ok(out)
}
