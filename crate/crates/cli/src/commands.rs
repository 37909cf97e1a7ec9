use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use typegaze_autodiff::Checkpoint;
use typegaze_core::analysis::{analyze, CoordinationReport, Trial};
use typegaze_core::io::{
    read_keylogs, read_layout, read_phrases, read_scanpaths, read_theta_csv, write_atomic, write_keylogs, write_layout,
    write_scanpaths, write_theta_csv,
};
use typegaze_core::metrics::{eval_csv, evaluate_trial};
use typegaze_core::simulator::{simulate_dataset, SimConfig};
use typegaze_core::{svg, HumanParams, KeyboardLayout, KeypressLog, Scanpath};
use typegaze_model::amortizer::{build_training_set, fit};
use typegaze_model::train::{fits, history_csv, prepare_all, simulate_samples};
use typegaze_model::{
    infer_scanpath, train, Amortizer, AmortizerConfig, DecodeMode, EyeModel, LossSwitches, ModelConfig, TrainConfig,
    TrainSample,
};

use crate::args::{
    Ablation, AnalyzeArgs, EvalArgs, FitAmortizerArgs, InferArgs, InferThetaArgs, Mode, SimulateArgs, TrainArgs,
};
use crate::error::{CliError, Result};

pub const KEYLOG_FILE: &str = "keylog.jsonl";
pub const SCANPATH_FILE: &str = "scanpath.jsonl";
pub const THETA_FILE: &str = "theta.csv";
pub const LAYOUT_FILE: &str = "layout.json";

pub struct Ctx {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub pool: rayon::ThreadPool,
}

impl Ctx {
    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// What a command read and wrote, for the manifest.
pub struct Done {
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub out_is_dir: bool,
    pub outputs: Vec<PathBuf>,
}

fn load_layout(path: Option<&Path>, inputs: &mut Vec<PathBuf>) -> Result<KeyboardLayout> {
    match path {
        Some(p) => {
            inputs.push(p.to_path_buf());
            Ok(read_layout(p)?)
        }
        None => Ok(KeyboardLayout::default()),
    }
}

/// Layout stored in a data directory, falling back to the default.
fn dir_layout(dir: &Path, inputs: &mut Vec<PathBuf>) -> Result<KeyboardLayout> {
    let p = dir.join(LAYOUT_FILE);
    load_layout(p.exists().then_some(p.as_path()), inputs)
}

fn write_text(path: &Path, text: &str, outputs: &mut Vec<PathBuf>) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    outputs.push(path.to_path_buf());
    Ok(())
}

/// Pairs each log with the scanpath of the same trial; the first id without a partner is an error.
fn join<'a>(logs: &'a [KeypressLog], paths: &'a [Scanpath]) -> Result<Vec<Trial<'a>>> {
    let by_id: HashMap<&str, &Scanpath> = paths.iter().map(|s| (s.trial_id.as_str(), s)).collect();
    let logged: HashMap<&str, ()> = logs.iter().map(|l| (l.trial_id.as_str(), ())).collect();
    if let Some(s) = paths.iter().find(|s| !logged.contains_key(s.trial_id.as_str())) {
        return Err(CliError::data(format!("trial {} has a scanpath but no keypress log", s.trial_id)));
    }
    logs.iter()
        .map(|l| {
            by_id
                .get(l.trial_id.as_str())
                .map(|s| (l, *s))
                .ok_or_else(|| CliError::data(format!("trial {} has a keypress log but no scanpath", l.trial_id)))
        })
        .collect()
}

fn group_by_user(logs: &[KeypressLog]) -> BTreeMap<&str, Vec<KeypressLog>> {
    let mut out: BTreeMap<&str, Vec<KeypressLog>> = BTreeMap::new();
    for l in logs {
        out.entry(l.user_id.as_str()).or_default().push(l.clone());
    }
    out
}

fn estimate_thetas(am: &Amortizer, logs: &[KeypressLog], layout: &KeyboardLayout) -> Result<BTreeMap<String, HumanParams>> {
    group_by_user(logs)
        .into_iter()
        .map(|(u, ls)| {
            let theta = am.infer_theta(&ls, layout).map_err(|e| CliError::data(format!("user {u}: {e}")))?;
            Ok((u.to_string(), theta))
        })
        .collect()
}

fn load_amortizer(path: &Path, inputs: &mut Vec<PathBuf>) -> Result<Amortizer> {
    inputs.push(path.to_path_buf());
    Ok(Amortizer::from_checkpoint(&Checkpoint::load(path)?)?)
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<Done> {
    let mut inputs = Vec::new();
    let layout = load_layout(a.layout.as_deref(), &mut inputs)?;
    let mut cfg = SimConfig {
        theta: a.theta.unwrap_or_default(),
        sample_theta: a.theta.is_none(),
        seed: ctx.seed,
        trials_per_user: a.trials,
        layout,
        ..Default::default()
    };
    if let Some(p) = &a.phrases {
        inputs.push(p.clone());
        cfg.phrase_set = read_phrases(p)?;
    }
    cfg.validate()?;
    let ds = simulate_dataset(&cfg, a.users)?;
    let out = ctx.out_or("simulated");
    let logs: Vec<KeypressLog> = ds.trials.iter().map(|t| t.log.clone()).collect();
    let paths: Vec<Scanpath> = ds.trials.iter().map(|t| t.scanpath.clone()).collect();
    let outputs = vec![out.join(KEYLOG_FILE), out.join(SCANPATH_FILE), out.join(THETA_FILE), out.join(LAYOUT_FILE)];
    write_keylogs(&outputs[0], &logs)?;
    write_scanpaths(&outputs[1], &paths)?;
    write_theta_csv(&outputs[2], &ds.thetas)?;
    write_layout(&outputs[3], &cfg.layout)?;
    info!("wrote {} trials for {} users to {}", logs.len(), a.users, out.display());
    Ok(Done { config: json!({ "users": a.users, "sim": cfg }), inputs, out, out_is_dir: true, outputs })
}

pub fn fit_amortizer(ctx: &Ctx, a: &FitAmortizerArgs) -> Result<Done> {
    let mut inputs = Vec::new();
    let layout = load_layout(a.layout.as_deref(), &mut inputs)?;
    let sim = SimConfig { seed: ctx.seed, trials_per_user: a.trials, layout, ..Default::default() };
    let total = a.users + a.holdout;
    let cfg = AmortizerConfig {
        n_users: a.users,
        trials_per_user: a.trials,
        epochs: a.epochs,
        holdout_fraction: a.holdout as f64 / total.max(1) as f64,
        seed: ctx.seed,
        ..Default::default()
    };
    info!("simulating {total} users");
    let pairs = build_training_set(&sim, total)?;
    let (am, report) = fit(&pairs, &cfg)?;
    if let Some(h) = report.heldout {
        info!(
            "held-out MAE over {} users: e_k {:.3} f_k {:.3} lambda {:.3} (predicting the mean: {:.3} {:.3} {:.3})",
            h.n, h.mae[0], h.mae[1], h.mae[2], h.baseline_mae[0], h.baseline_mae[1], h.baseline_mae[2]
        );
    }
    let out = ctx.out_or("amortizer.ckpt");
    am.to_checkpoint()?.save(&out)?;
    let config = json!({ "amortizer": cfg, "holdout_users": a.holdout, "sim": sim, "final_train_mse": report.final_train_mse,
        "heldout_mae": report.heldout.map(|h| h.mae) });
    Ok(Done { config, inputs, outputs: vec![out.clone()], out, out_is_dir: false })
}

fn switches(ablate: &[Ablation]) -> (LossSwitches, bool) {
    let off = |x| ablate.contains(&x);
    (
        LossSwitches { sim: !off(Ablation::Sim), len: !off(Ablation::Len), f: !off(Ablation::F), v: !off(Ablation::V) },
        !off(Ablation::Params),
    )
}

/// Recorded trials joined with their users' parameters, dropping those longer than the model handles.
fn recorded_samples(dir: &Path, amortizer: Option<&Path>, cfg: &ModelConfig, inputs: &mut Vec<PathBuf>) -> Result<Vec<TrainSample>> {
    let (kp, sp) = (dir.join(KEYLOG_FILE), dir.join(SCANPATH_FILE));
    inputs.extend([kp.clone(), sp.clone()]);
    let logs = read_keylogs(&kp)?;
    let paths = read_scanpaths(&sp)?;
    let layout = dir_layout(dir, inputs)?;
    let tp = dir.join(THETA_FILE);
    let mut thetas = if tp.exists() {
        inputs.push(tp.clone());
        read_theta_csv(&tp)?
    } else {
        BTreeMap::new()
    };
    let missing: Vec<KeypressLog> = logs.iter().filter(|l| !thetas.contains_key(&l.user_id)).cloned().collect();
    if !missing.is_empty() {
        let path = amortizer.ok_or_else(|| {
            CliError::data(format!("no parameters for user {} and no --amortizer to estimate them", missing[0].user_id))
        })?;
        let am = load_amortizer(path, inputs)?;
        thetas.extend(estimate_thetas(&am, &missing, &layout)?);
    }
    let trials = join(&logs, &paths)?;
    let mut out = Vec::new();
    for (log, s) in trials {
        if fits(cfg, log, s) {
            out.push(TrainSample { log: log.clone(), scanpath: s.clone(), theta: thetas[&log.user_id] });
        }
    }
    if out.len() < logs.len() {
        warn!("skipped {} recorded trials longer than the model limits", logs.len() - out.len());
    }
    Ok(out)
}

pub fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<Done> {
    let mut inputs = Vec::new();
    let (loss_switches, use_param_inference) = switches(&a.ablate);
    let cfg = ModelConfig { loss_switches, use_param_inference, seed: ctx.seed, ..Default::default() };
    cfg.validate()?;
    let (mut samples, layout) = match &a.data {
        Some(dir) => (recorded_samples(dir, a.amortizer.as_deref(), &cfg, &mut inputs)?, dir_layout(dir, &mut Vec::new())?),
        None => (Vec::new(), KeyboardLayout::default()),
    };
    let recorded = samples.len();
    if a.sim_trials > 0 {
        let sim = SimConfig { sample_theta: true, seed: ctx.seed, layout: layout.clone(), ..Default::default() };
        samples.extend(simulate_samples(&sim, a.sim_trials, &cfg)?);
    }
    if samples.is_empty() {
        return Err(CliError::data("no training trials: pass --data or a positive --sim-trials"));
    }
    info!("training on {recorded} recorded and {} simulated trials", samples.len() - recorded);
    let (data, _) = prepare_all(&samples, &cfg, &layout.screen)?;
    let out = ctx.out_or("model");
    let mut tc = TrainConfig {
        steps: a.steps,
        batch: a.batch,
        seed: ctx.seed,
        checkpoint_every: a.checkpoint_every,
        out_dir: Some(out.clone()),
        ..Default::default()
    };
    if let Some(lr) = a.lr {
        tc.schedule.initial = lr;
    }
    let result = train(cfg.clone(), &data, &tc)?;
    let mut outputs = Vec::new();
    let ck = out.join("model.ckpt");
    result.model.to_checkpoint(a.steps, Some(result.optimizer.clone()))?.save(&ck)?;
    outputs.push(ck);
    write_text(&out.join("history.csv"), &history_csv(&result.history), &mut outputs)?;
    if let Some(last) = result.history.last() {
        info!("final batch loss {:.4}", last.loss.total);
    }
    let config = json!({
        "model": cfg,
        "steps": tc.steps, "batch": tc.batch, "lr": tc.schedule.initial, "lr_decay": tc.schedule.factor,
        "lr_decay_every": tc.schedule.every, "weight_decay": tc.weight_decay, "checkpoint_every": tc.checkpoint_every,
        "recorded_trials": recorded, "sim_trials": a.sim_trials,
    });
    Ok(Done { config, inputs, out, out_is_dir: true, outputs })
}

pub fn infer(ctx: &Ctx, a: &InferArgs) -> Result<Done> {
    let mut inputs = vec![a.ckpt.clone(), a.keylog.clone()];
    let layout = load_layout(a.layout.as_deref(), &mut inputs)?;
    let model = EyeModel::from_checkpoint(&Checkpoint::load(&a.ckpt)?)?;
    let logs = read_keylogs(&a.keylog)?;
    let per_user = match (&a.theta, &a.from_trials, &a.amortizer) {
        (Some(_), _, _) => BTreeMap::new(),
        (None, Some(dir), Some(am)) => {
            let am = load_amortizer(am, &mut inputs)?;
            let kp = dir.join(KEYLOG_FILE);
            inputs.push(kp.clone());
            estimate_thetas(&am, &read_keylogs(&kp)?, &layout)?
        }
        _ => return Err(CliError::usage("infer needs --theta or --from-trials with --amortizer")),
    };
    let thetas: Vec<HumanParams> = logs
        .iter()
        .map(|l| match a.theta {
            Some(t) => Ok(t),
            None => per_user.get(&l.user_id).copied().ok_or_else(|| CliError::data(format!("no trials for user {} in --from-trials", l.user_id))),
        })
        .collect::<Result<_>>()?;
    let geom = layout.screen;
    let results: Vec<_> = ctx.pool.install(|| {
        logs.par_iter()
            .zip(&thetas)
            .enumerate()
            .map(|(i, (log, theta))| {
                let mode = match a.mode {
                    Mode::Mean => DecodeMode::Mean,
                    Mode::Sample => DecodeMode::Sample { seed: ctx.seed.wrapping_add(i as u64) },
                };
                infer_scanpath(&model, log, theta, &geom, mode).map_err(|e| match CliError::from(e) {
                    CliError::Data(m) => CliError::Data(format!("trial {}: {m}", log.trial_id)),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let degenerate = results.iter().filter(|r| r.degenerate).count();
    if degenerate > 0 {
        warn!("{degenerate} predictions had no valid slot and fell back to a single fixation");
    }
    let paths: Vec<Scanpath> = results.into_iter().map(|r| r.scanpath).collect();
    let out = ctx.out_or("predicted.jsonl");
    write_scanpaths(&out, &paths)?;
    let config = json!({ "mode": format!("{:?}", a.mode).to_lowercase(), "theta": a.theta, "estimated_theta": per_user });
    Ok(Done { config, inputs, outputs: vec![out.clone()], out, out_is_dir: false })
}

pub fn infer_theta(ctx: &Ctx, a: &InferThetaArgs) -> Result<Done> {
    let mut inputs = Vec::new();
    let layout = load_layout(a.layout.as_deref(), &mut inputs)?;
    let am = load_amortizer(&a.ckpt, &mut inputs)?;
    let kp = a.trials.join(KEYLOG_FILE);
    inputs.push(kp.clone());
    let thetas = estimate_thetas(&am, &read_keylogs(&kp)?, &layout)?;
    let out = ctx.out_or("theta_estimated.csv");
    write_theta_csv(&out, &thetas)?;
    for (u, t) in &thetas {
        info!("{u}: e_k {:.3} f_k {:.3} lambda {:.3}", t.e_k, t.f_k, t.lambda);
    }
    Ok(Done { config: json!({ "users": thetas.len() }), inputs, outputs: vec![out.clone()], out, out_is_dir: false })
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<Done> {
    let mut inputs = vec![a.pred.clone(), a.gt.clone()];
    let layout = load_layout(a.layout.as_deref(), &mut inputs)?;
    let pred = read_scanpaths(&a.pred)?;
    let gt = read_scanpaths(&a.gt)?;
    let by_id: HashMap<&str, &Scanpath> = pred.iter().map(|s| (s.trial_id.as_str(), s)).collect();
    if let Some(g) = gt.iter().find(|g| !by_id.contains_key(g.trial_id.as_str())) {
        return Err(CliError::data(format!("trial {} is missing from the predictions", g.trial_id)));
    }
    let gt_ids: HashMap<&str, ()> = gt.iter().map(|g| (g.trial_id.as_str(), ())).collect();
    if let Some(p) = pred.iter().find(|p| !gt_ids.contains_key(p.trial_id.as_str())) {
        return Err(CliError::data(format!("trial {} is missing from the ground truth", p.trial_id)));
    }
    let geom = layout.screen;
    let rows = ctx.pool.install(|| {
        gt.par_iter()
            .map(|g| {
                evaluate_trial(by_id[g.trial_id.as_str()], g, &geom, a.sted_k)
                    .map_err(|e| CliError::data(format!("trial {}: {e}", g.trial_id)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let csv = eval_csv(&rows);
    if let Some(summary) = csv.lines().last() {
        info!("{summary}");
    }
    let out = ctx.out_or("eval.csv");
    let mut outputs = Vec::new();
    write_text(&out, &csv, &mut outputs)?;
    Ok(Done { config: json!({ "sted_k": a.sted_k, "trials": rows.len() }), inputs, outputs, out, out_is_dir: false })
}

fn csv_of<T>(header: &str, rows: &[T], line: impl Fn(&T) -> String) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&line(r));
        s.push('\n');
    }
    s
}

fn bin_label(lo: f64, hi: Option<f64>) -> String {
    match hi {
        Some(h) => format!("{lo}-{h}"),
        None => format!("{lo}+"),
    }
}

fn write_report(report: &CoordinationReport, out: &Path, svgs: bool, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(report).map_err(|e| CliError::data(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&out.join("report.json"), &json)?;
    outputs.push(out.join("report.json"));
    let curve = csv_of("offset_ms,mean_distance_px,samples", &report.distance_curve, |p| {
        format!("{},{},{}", p.offset_ms, p.mean_distance_px, p.samples)
    });
    write_text(&out.join("distance_curve.csv"), &curve, outputs)?;
    let bins = |rows: &[typegaze_core::analysis::RatioBin]| {
        csv_of("lo,hi,mean_ratio,count", rows, |b| {
            format!("{},{},{},{}", b.lo, b.hi.map(|h| h.to_string()).unwrap_or_default(), b.mean_ratio, b.count)
        })
    };
    write_text(&out.join("ratio_by_iki.csv"), &bins(&report.ratio_by_iki), outputs)?;
    write_text(&out.join("ratio_by_travel.csv"), &bins(&report.ratio_by_travel), outputs)?;
    let keys: Vec<_> = report.per_key_ratio.iter().collect();
    let per_key = csv_of("key,ratio,keyboard_ms,total_ms,taps", &keys, |(k, a)| {
        format!("{k},{},{},{},{}", a.ratio, a.keyboard_ms, a.total_ms, a.taps)
    });
    write_text(&out.join("per_key_ratio.csv"), &per_key, outputs)?;
    if svgs {
        let pts: Vec<(f64, f64)> = report.distance_curve.iter().map(|p| (p.offset_ms, p.mean_distance_px)).collect();
        let chart = svg::line_chart("Gaze-tap distance", "offset from tap (ms)", "distance (px)", &pts);
        write_text(&out.join("distance_curve.svg"), &chart, outputs)?;
        for (name, rows, xlabel) in [
            ("ratio_by_iki", &report.ratio_by_iki, "inter-key interval (ms)"),
            ("ratio_by_travel", &report.ratio_by_travel, "finger travel (px)"),
        ] {
            let bars: Vec<(String, f64)> = rows.iter().map(|b| (bin_label(b.lo, b.hi), b.mean_ratio)).collect();
            let chart = svg::bar_chart("Gaze on keyboard", xlabel, "ratio", &bars);
            write_text(&out.join(format!("{name}.svg")), &chart, outputs)?;
        }
        let bars: Vec<(String, f64)> = report.per_key_ratio.iter().map(|(k, a)| (k.clone(), a.ratio)).collect();
        let chart = svg::bar_chart("Gaze on keyboard before each key", "key", "ratio", &bars);
        write_text(&out.join("per_key_ratio.svg"), &chart, outputs)?;
    }
    Ok(())
}

pub fn analyze_cmd(ctx: &Ctx, a: &AnalyzeArgs) -> Result<Done> {
    let mut inputs = Vec::new();
    let from_dir = |f: &str| a.data.as_ref().map(|d| d.join(f));
    let kp = a.keylog.clone().or_else(|| from_dir(KEYLOG_FILE)).ok_or_else(|| CliError::usage("analyze needs --keylog or --data"))?;
    let sp = a.scanpath.clone().or_else(|| from_dir(SCANPATH_FILE)).ok_or_else(|| CliError::usage("analyze needs --scanpath or --data"))?;
    inputs.extend([kp.clone(), sp.clone()]);
    let layout = match (&a.layout, &a.data) {
        (Some(p), _) => load_layout(Some(p), &mut inputs)?,
        (None, Some(d)) => dir_layout(d, &mut inputs)?,
        (None, None) => KeyboardLayout::default(),
    };
    let logs = read_keylogs(&kp)?;
    let paths = read_scanpaths(&sp)?;
    let trials = join(&logs, &paths)?;
    let report = analyze(&trials, &layout)?;
    let out = ctx.out_or("analysis");
    let mut outputs = Vec::new();
    write_report(&report, &out, a.svg, &mut outputs)?;
    if let Some(m) = typegaze_core::analysis::curve_argmin(&report.distance_curve, f64::NEG_INFINITY, f64::INFINITY) {
        info!("closest gaze to the finger {:.0} ms from the tap ({:.1} px)", m.offset_ms, m.mean_distance_px);
    }
    Ok(Done { config: json!({ "trials": trials.len(), "svg": a.svg }), inputs, outputs, out, out_is_dir: true })
}
