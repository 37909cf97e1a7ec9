//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers to run a subset, e.g. `cargo test --test acceptance -- 1 2 4`.
//! Criteria listed in `KNOWN_SHORTFALLS` print FAIL without failing the run; any other
//! failure exits non-zero.

#[path = "../../autodiff/tests/common/mod.rs"]
mod autodiff_checks;
mod common;
#[path = "../../core/tests/common/mod.rs"]
mod core_oracles;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typegaze_autodiff::Graph;
use typegaze_core::analysis::{
    analyze, curve_argmin, gaze_tap_distance_curve, has_dip, CURVE_STEP_MS, CURVE_WINDOW_MS, IKI_BIN_MS,
    IKI_RANGE_MS, PRE_TAP_WINDOW_MS, TRAVEL_BIN_PX, TRAVEL_RANGE_PX,
};
use typegaze_core::metrics::{dtwd, gaze_stats, multimatch, multimatch_alignment, sted, GazeStats, DEFAULT_STED_K};
use typegaze_core::simulator::{simulate_dataset, SimConfig};
use typegaze_core::Scanpath;
use typegaze_model::amortizer::{build_training_set, fit};
use typegaze_model::infer::{infer_scanpath, DecodeMode};
use typegaze_model::loss::{loss_f, loss_len, loss_sim, loss_v, predicted_fixations, Target};
use typegaze_model::train::{evaluate_loss, history_csv, prepare_all, simulate_samples, train, TrainConfig, TrainSample};
use typegaze_model::{AmortizerConfig, EyeModel, LossSwitches, ModelConfig};

const KNOWN_SHORTFALLS: [u32; 3] = [5, 6, 7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Run = Result<Outcome, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_path(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Scanpath {
    let n = rng.random_range(min..=max);
    let pts: Vec<(f64, f64, f64)> =
        (0..n).map(|_| (rng.random_range(0.0..1080.0), rng.random_range(0.0..1980.0), rng.random_range(50.0..900.0))).collect();
    Scanpath::contiguous("p", &pts)
}

fn criterion_1() -> Run {
    let start = Instant::now();
    let cfg = SimConfig { sample_theta: true, seed: 101, ..Default::default() };
    let ds = simulate_dataset(&cfg, 200usize.div_ceil(cfg.trials_per_user)).map_err(err)?;
    let g = &cfg.layout.screen;
    let mut worst: f64 = 0.0;
    for t in ds.trials.iter().take(200) {
        let a = &t.scanpath;
        let mm = multimatch(a, a, g).map_err(err)?.to_array();
        worst = mm.iter().map(|v| (v - 1.0).abs()).fold(worst, f64::max);
        worst = worst.max(dtwd(a, a, g).map_err(err)?.abs());
        if a.len() >= DEFAULT_STED_K {
            worst = worst.max(sted(a, a, g, DEFAULT_STED_K).map_err(err)?.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(worst <= 1e-12 && secs < 10.0, format!("200 scanpaths, worst deviation {worst:.1e}, {secs:.2} s")))
}

fn criterion_2() -> Run {
    let start = Instant::now();
    let g = typegaze_core::ScreenGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut dtw_err, mut align_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (a, b) = (random_path(&mut rng, 1, 6), random_path(&mut rng, 1, 6));
        dtw_err = dtw_err.max((dtwd(&a, &b, &g).map_err(err)? - core_oracles::brute_dtwd(&a, &b, &g)).abs());
        let (a, b) = (random_path(&mut rng, 2, 6), random_path(&mut rng, 2, 6));
        let fast = multimatch_alignment(&a, &b).map_err(err)?.cost;
        align_err = align_err.max((fast - core_oracles::brute_alignment_cost(&a, &b)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        dtw_err <= 1e-9 && align_err <= 1e-9 && secs < 30.0,
        format!("100 pairs, dtwd error {dtw_err:.1e}, alignment error {align_err:.1e}, {secs:.2} s"),
    ))
}

fn criterion_3() -> Run {
    let start = Instant::now();
    let prims = autodiff_checks::worst_primitive_errors(2024, 20).map_err(err)?;
    let terms = common::term_grad_errors(7, 20).map_err(err)?;
    let (pname, pworst) = prims.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).ok_or("no primitives")?;
    let tw = terms.iter().max_by(|a, b| a.worst.total_cmp(&b.worst)).ok_or("no terms")?;
    let secs = start.elapsed().as_secs_f64();
    let names: Vec<&str> = terms.iter().map(|t| t.name).collect();
    Ok(outcome(
        pworst < 1e-4 && tw.worst < 1e-4 && secs < 60.0,
        format!(
            "{} primitives worst {pworst:.1e} ({pname}); terms {names:?} worst {:.1e} ({}); 20 instances each, {secs:.1} s",
            prims.len(),
            tw.worst,
            tw.name
        ),
    ))
}

fn criterion_4() -> Run {
    let (sp, log) = common::example();
    let t = Target::new(&sp, &log, &common::geom(), 8).map_err(err)?;
    let gt = t.guidance.ok_or("example has no window coverage")?;
    let mut g = Graph::new();
    let h = common::heads_at(&mut g, &t, 8, 40.0);
    let pred = predicted_fixations(&mut g, &h, t.len()).map_err(err)?;
    let v = loss_v(&mut g, &pred, &t).map_err(err)?;
    let len = loss_len(&mut g, h.logit, t.len()).map_err(err)?;
    let sim = loss_sim(&mut g, &pred, &t).map_err(err)?;
    let f = loss_f(&mut g, &pred, &t).map_err(err)?;
    let dv = g.value(v).item().abs();
    let dlen = g.value(len).item().abs();
    let dsim = (g.value(sim).item() + 1.0).abs();
    let df = (g.value(f).item() - 0.5 * gt.mean_distance).abs();
    let worst = dv.max(dlen).max(dsim).max(df);
    Ok(outcome(
        worst <= 1e-9,
        format!("|L_v| {dv:.1e}, L_len {dlen:.1e} at logits ±40, |L_sim+1| {dsim:.1e}, |L_f-0.5d| {df:.1e}"),
    ))
}

fn criterion_5() -> Run {
    let start = Instant::now();
    let cfg = AmortizerConfig::default();
    let n_hold = 100;
    let total = cfg.n_users + n_hold;
    let sim = SimConfig { trials_per_user: cfg.trials_per_user, ..Default::default() };
    let pairs = build_training_set(&sim, total).map_err(err)?;
    let cfg = AmortizerConfig { holdout_fraction: n_hold as f64 / total as f64, ..cfg };
    let (_, report) = fit(&pairs, &cfg).map_err(err)?;
    let h = report.heldout.ok_or("no held-out users")?;
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        h.n == n_hold && h.mae.iter().all(|&m| m < 0.1) && secs < 600.0,
        format!(
            "{} train / {} held out, MAE e {:.3} f {:.3} l {:.3} (baseline {:.3} {:.3} {:.3}), {secs:.0} s",
            report.train_pairs, h.n, h.mae[0], h.mae[1], h.mae[2], h.baseline_mae[0], h.baseline_mae[1], h.baseline_mae[2]
        ),
    ))
}

fn criterion_6() -> Run {
    let start = Instant::now();
    let sim = SimConfig { sample_theta: true, seed: 6, ..Default::default() };
    let cfg = ModelConfig::default();
    let samples = simulate_samples(&sim, 8, &cfg).map_err(err)?;
    let (data, _) = prepare_all(&samples, &cfg, &sim.layout.screen).map_err(err)?;
    let tc = TrainConfig { steps: 500, batch: 8, seed: 6, checkpoint_every: 0, ..Default::default() };
    let a = train(cfg.clone(), &data, &tc).map_err(err)?;
    let b = train(cfg, &data, &tc).map_err(err)?;
    let identical = history_csv(&a.history) == history_csv(&b.history);
    let first = a.history.first().ok_or("empty history")?.loss;
    let last = evaluate_loss(&a.model, &data).map_err(err)?;
    let drop = (first.total - last.total) / first.total.abs();
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        drop >= 0.5 && identical && secs < 600.0,
        format!(
            "total {:.4} -> {:.4} ({:.1}% reduction; sim {:.3} len {:.3} f {:.3} v {:.3} at the end), re-run identical: {identical}, {secs:.0} s",
            first.total,
            last.total,
            100.0 * drop,
            last.sim,
            last.len,
            last.f,
            last.v
        ),
    ))
}

struct Trained {
    model: EyeModel,
    secs: f64,
}

fn train_on(switches: LossSwitches, data_seed: u64) -> Result<(Trained, Vec<TrainSample>), String> {
    let start = Instant::now();
    let sim = SimConfig { sample_theta: true, seed: data_seed, ..Default::default() };
    let cfg = ModelConfig { loss_switches: switches, ..Default::default() };
    let mut all = simulate_samples(&sim, 350, &cfg).map_err(err)?;
    let held = all.split_off(300);
    let (data, _) = prepare_all(&all, &cfg, &sim.layout.screen).map_err(err)?;
    let tc = TrainConfig { steps: 2000, seed: 3, checkpoint_every: 0, ..Default::default() };
    let out = train(cfg, &data, &tc).map_err(err)?;
    Ok((Trained { model: out.model, secs: start.elapsed().as_secs_f64() }, held))
}

fn predict(model: &EyeModel, held: &[TrainSample]) -> Result<Vec<Scanpath>, String> {
    let geom = SimConfig::default().layout.screen;
    held.iter()
        .map(|s| infer_scanpath(model, &s.log, &s.theta, &geom, DecodeMode::Mean).map(|i| i.scanpath).map_err(err))
        .collect()
}

fn mean_stats(paths: &[Scanpath]) -> Result<GazeStats, String> {
    let geom = SimConfig::default().layout.screen;
    let mut m = GazeStats { fixation_count: 0.0, mean_fixation_duration: 0.0, gaze_shifts: 0.0, keyboard_ratio: 0.0, proofreading_rate: 0.0 };
    for p in paths {
        let s = gaze_stats(p, &geom).map_err(err)?;
        m.fixation_count += s.fixation_count;
        m.mean_fixation_duration += s.mean_fixation_duration;
        m.gaze_shifts += s.gaze_shifts;
        m.keyboard_ratio += s.keyboard_ratio;
        m.proofreading_rate += s.proofreading_rate;
    }
    let n = paths.len() as f64;
    m.fixation_count /= n;
    m.mean_fixation_duration /= n;
    m.gaze_shifts /= n;
    m.keyboard_ratio /= n;
    m.proofreading_rate /= n;
    Ok(m)
}

fn within(v: f64, mean: f64, band: f64) -> bool {
    (mean - band..=mean + band).contains(&v)
}

struct Dip {
    present: bool,
    argmin: Option<(f64, f64)>,
    window_mean: f64,
}

fn dip_of(held: &[TrainSample], paths: &[Scanpath]) -> Result<Dip, String> {
    let trials: Vec<_> = held.iter().zip(paths).map(|(s, p)| (&s.log, p)).collect();
    let curve = gaze_tap_distance_curve(&trials, CURVE_WINDOW_MS, CURVE_STEP_MS).map_err(err)?;
    let inside: Vec<f64> = curve.iter().filter(|p| (-350.0..=0.0).contains(&p.offset_ms)).map(|p| p.mean_distance_px).collect();
    Ok(Dip {
        present: has_dip(&curve, -350.0, 0.0, 0.05),
        argmin: curve_argmin(&curve, -350.0, 0.0).map(|p| (p.offset_ms, p.mean_distance_px)),
        window_mean: inside.iter().sum::<f64>() / inside.len().max(1) as f64,
    })
}

struct Full {
    stats: GazeStats,
    dip: Dip,
}

fn criterion_7(full: &mut Option<Full>) -> Run {
    let (t, held) = train_on(LossSwitches::default(), 1)?;
    let paths = predict(&t.model, &held)?;
    let m = mean_stats(&paths)?;
    let gt = mean_stats(&held.iter().map(|s| s.scanpath.clone()).collect::<Vec<_>>())?;
    let ok = within(m.keyboard_ratio, 0.63, 0.34) && within(m.fixation_count, 21.25, 10.46) && within(m.gaze_shifts, 3.81, 2.40);
    let detail = format!(
        "50 held-out: keyboard ratio {:.3}, fixations {:.2}, gaze shifts {:.2} (simulator {:.3}, {:.2}, {:.2}), train {:.0} s",
        m.keyboard_ratio, m.fixation_count, m.gaze_shifts, gt.keyboard_ratio, gt.fixation_count, gt.gaze_shifts, t.secs
    );
    *full = Some(Full { stats: m, dip: dip_of(&held, &paths)? });
    Ok(outcome(ok && t.secs < 1800.0, detail))
}

fn criterion_8(full: &mut Option<Full>) -> Run {
    if full.is_none() {
        criterion_7(full)?;
    }
    let full = full.as_ref().ok_or("criterion 7 model missing")?;
    let (no_v, held) = train_on(LossSwitches { v: false, ..Default::default() }, 1)?;
    let v_rate = mean_stats(&predict(&no_v.model, &held)?)?.proofreading_rate;
    let (no_f, held) = train_on(LossSwitches { f: false, ..Default::default() }, 1)?;
    let f_dip = dip_of(&held, &predict(&no_f.model, &held)?)?;
    let fmt_dip = |d: &Dip| match d.argmin {
        Some((o, v)) => format!("min {v:.1} px at {o} ms vs window mean {:.1}", d.window_mean),
        None => "no curve points".to_string(),
    };
    Ok(outcome(
        v_rate < 0.05 && !f_dip.present,
        format!(
            "without L_v proofreading {v_rate:.3} (full model {:.3}); without L_f dip {} [{}] (full model dip {} [{}])",
            full.stats.proofreading_rate,
            f_dip.present,
            fmt_dip(&f_dip),
            full.dip.present,
            fmt_dip(&full.dip)
        ),
    ))
}

fn criterion_9() -> Run {
    let cfg = SimConfig { sample_theta: true, seed: 909, ..Default::default() };
    let ds = simulate_dataset(&cfg, 40).map_err(err)?;
    let layout = &cfg.layout;
    let g = &layout.screen;
    let trials: Vec<_> = ds.trials.iter().map(|t| (&t.log, &t.scanpath)).collect();
    let report = analyze(&trials, layout).map_err(err)?;
    let argmin = curve_argmin(&report.distance_curve, CURVE_WINDOW_MS.0, CURVE_WINDOW_MS.1).ok_or("empty curve")?;
    let mut worst: f64 = 0.0;
    for p in &report.distance_curve {
        let (mean, n) = core_oracles::distance_at(&trials, p.offset_ms);
        if n != p.samples {
            return Ok(outcome(false, format!("sample count differs at {} ms", p.offset_ms)));
        }
        worst = worst.max((mean - p.mean_distance_px).abs() / mean.max(1.0));
    }
    let (by_iki, by_travel) = core_oracles::interval_ratios(&trials, g);
    for (bins, members, width, range) in [
        (&report.ratio_by_iki, &by_iki, IKI_BIN_MS, IKI_RANGE_MS),
        (&report.ratio_by_travel, &by_travel, TRAVEL_BIN_PX, TRAVEL_RANGE_PX),
    ] {
        let oracle = core_oracles::bin_means(members, width, range);
        if oracle.len() != bins.len() || bins.iter().zip(&oracle).any(|(b, o)| b.count != o.2) {
            return Ok(outcome(false, "ratio bin membership differs"));
        }
        for (b, o) in bins.iter().zip(&oracle) {
            worst = worst.max((b.mean_ratio - o.1).abs());
        }
    }
    let keys = core_oracles::per_key_totals(&trials, layout, PRE_TAP_WINDOW_MS);
    for (label, a) in &report.per_key_ratio {
        let (kb, all, n) = keys.get(label).copied().ok_or("unknown key in report")?;
        if n != a.taps {
            return Ok(outcome(false, format!("tap count differs for key {label}")));
        }
        worst = worst.max((a.ratio - kb / all).abs());
    }
    let group = |f: &dyn Fn(&str) -> bool| {
        let (kb, all) = keys.iter().filter(|(k, _)| f(k)).fold((0.0, 0.0), |(a, b), (_, v)| (a + v.0, b + v.1));
        (all > 0.0).then(|| kb / all)
    };
    let grouped = [
        (report.grouped_key_ratio.space, group(&|k| k == "space")),
        (report.grouped_key_ratio.backspace, group(&|k| k == "backspace")),
        (report.grouped_key_ratio.other, group(&|k| k != "space" && k != "backspace")),
    ];
    for (got, want) in grouped {
        match (got, want) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => return Ok(outcome(false, "grouped key coverage differs")),
        }
    }
    let in_range = (-350.0..=-150.0).contains(&argmin.offset_ms);
    Ok(outcome(
        in_range && worst <= 1e-9,
        format!(
            "{} trials, argmin {} ms ({:.1} px), worst ratio deviation {worst:.1e}",
            trials.len(),
            argmin.offset_ms,
            argmin.mean_distance_px
        ),
    ))
}

fn main() -> ExitCode {
    // cargo forwards its own flags too; only bare numbers select criteria
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |c: u32| selected.is_empty() || selected.contains(&c);
    let mut full = None;
    let mut unexpected = Vec::new();
    for c in 1..=9u32 {
        if !wanted(c) {
            continue;
        }
        let run = match c {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(&mut full),
            8 => criterion_8(&mut full),
            _ => criterion_9(),
        };
        let o = run.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        let known = KNOWN_SHORTFALLS.contains(&c);
        let note = if !o.pass && known { " (known shortfall)" } else { "" };
        println!("{} criterion {c}: {}{note}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && !known {
            unexpected.push(c);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
