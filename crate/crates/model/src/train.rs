//! Mini-batch training of the eye model.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use typegaze_autodiff::{Adam, Graph, StepDecay, Tensor, DEFAULT_WEIGHT_DECAY};
use typegaze_core::simulator::{simulate_user_trial, SimConfig};
use typegaze_core::{HumanParams, KeypressLog, Scanpath, ScreenGeometry};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::layers::Pass;
use crate::loss::{total_loss, LossBreakdown, Target};
use crate::network::{tap_features, EyeModel, Heads, MIN_DURATION_S};

/// A keypress log, its scanpath and the parameters the model is conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub log: KeypressLog,
    pub scanpath: Scanpath,
    pub theta: HumanParams,
}

/// A sample converted to network inputs and loss targets.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub features: Tensor,
    pub theta: HumanParams,
    pub target: Target,
}

/// True when the trial fits the network's tap and slot limits.
pub fn fits(cfg: &ModelConfig, log: &KeypressLog, s: &Scanpath) -> bool {
    !log.taps.is_empty() && log.taps.len() <= cfg.max_taps && !s.is_empty() && s.len() <= cfg.max_fixations
}

pub fn prepare(sample: &TrainSample, cfg: &ModelConfig, geom: &ScreenGeometry) -> Result<Prepared> {
    if sample.log.trial_id != sample.scanpath.trial_id {
        return Err(ModelError::invalid(
            "sample",
            format!("keylog {} paired with scanpath {}", sample.log.trial_id, sample.scanpath.trial_id),
        ));
    }
    if sample.log.taps.len() > cfg.max_taps {
        return Err(ModelError::invalid("sample", format!("{} taps exceed max_taps {}", sample.log.taps.len(), cfg.max_taps)));
    }
    Ok(Prepared {
        features: tap_features(&sample.log, geom)?,
        theta: sample.theta,
        target: Target::new(&sample.scanpath, &sample.log, geom, cfg.max_fixations)?,
    })
}

/// Prepares every sample that fits the limits; returns them with the number skipped.
pub fn prepare_all(samples: &[TrainSample], cfg: &ModelConfig, geom: &ScreenGeometry) -> Result<(Vec<Prepared>, usize)> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples.iter().filter(|s| fits(cfg, &s.log, &s.scanpath)) {
        out.push(prepare(s, cfg, geom)?);
    }
    let skipped = samples.len() - out.len();
    Ok((out, skipped))
}

/// Walks simulated users in order and keeps the first `n` trials that fit the model.
pub fn simulate_samples(sim: &SimConfig, n: usize, cfg: &ModelConfig) -> Result<Vec<TrainSample>> {
    sim.validate()?;
    let mut out = Vec::with_capacity(n);
    let mut user = 0;
    // a hard cap keeps a pathological config from looping forever
    while out.len() < n && user < 100 * (n + 1) {
        for trial in 0..sim.trials_per_user {
            let t = simulate_user_trial(sim, user, trial)?;
            if fits(cfg, &t.log, &t.scanpath) {
                out.push(TrainSample { log: t.log, scanpath: t.scanpath, theta: t.theta });
                if out.len() == n {
                    break;
                }
            }
        }
        user += 1;
    }
    if out.len() < n {
        return Err(ModelError::invalid("simulation", format!("only {} of {n} trials fit the model limits", out.len())));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub schedule: StepDecay,
    pub weight_decay: f64,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub out_dir: Option<PathBuf>,
    /// Start the head biases at the training-set mean position, duration and length.
    pub init_head_from_data: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 8000,
            batch: 16,
            schedule: StepDecay::default(),
            weight_decay: DEFAULT_WEIGHT_DECAY,
            seed: 0,
            checkpoint_every: 1000,
            out_dir: None,
            init_head_from_data: true,
        }
    }
}

/// Mean loss of one step's batch, before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    pub lr: f64,
    pub loss: LossBreakdown,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("step,lr,total,sim,len,f,v\n");
    for r in rows {
        let l = &r.loss;
        s.push_str(&format!("{},{},{},{},{},{},{}\n", r.step, r.lr, l.total, l.sim, l.len, l.f, l.v));
    }
    s
}

pub struct TrainOutcome {
    pub model: EyeModel,
    pub history: Vec<HistoryRow>,
    pub optimizer: Adam,
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn softplus_inv(y: f64) -> f64 {
    let y = y.max(1e-6);
    y + (-(-y).exp()).ln_1p()
}

fn init_head(model: &mut EyeModel, data: &[Prepared]) {
    let (mut sx, mut sy, mut st, mut n) = (0.0, 0.0, 0.0, 0.0);
    for p in data {
        let t = &p.target;
        sx += t.x.iter().sum::<f64>();
        sy += t.y.iter().sum::<f64>();
        st += t.t.iter().sum::<f64>();
        n += t.len() as f64;
    }
    let slots = model.cfg.max_fixations as f64;
    let bias = model.params.get_mut(model.head_bias()).data_mut();
    bias[0] = logit(sx / n);
    bias[1] = logit(sy / n);
    bias[4] = softplus_inv(st / n - MIN_DURATION_S);
    bias[6] = logit(n / data.len() as f64 / slots);
}

/// Mean loss of `batch` under the current parameters, with its graph ready for backward.
pub fn batch_loss(model: &EyeModel, batch: &[&Prepared], dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<(Graph, typegaze_autodiff::BoundParams, typegaze_autodiff::Var, LossBreakdown)> {
    let mut g = Graph::new();
    let bp = model.params.bind(&mut g);
    let mut sum = LossBreakdown::default();
    let mut total = None;
    {
        let mut p = Pass { g: &mut g, bp: &bp, dropout };
        for s in batch {
            let raw = model.forward(&mut p, &s.features, &s.theta)?;
            let heads = Heads::from_raw(p.g, raw)?;
            let (l, b) = total_loss(p.g, &heads, &s.target, model.cfg.loss_switches)?;
            sum.add(&b);
            total = Some(match total {
                Some(t) => p.g.add(t, l)?,
                None => l,
            });
        }
    }
    let total = total.ok_or_else(|| ModelError::invalid("batch", "empty"))?;
    let k = 1.0 / batch.len() as f64;
    let mean = g.scale(total, k);
    Ok((g, bp, mean, sum.scaled(k)))
}

fn save(model: &EyeModel, step: u64, adam: &Adam, path: &Path) -> Result<()> {
    model.to_checkpoint(step, Some(adam.clone()))?.save(path)?;
    Ok(())
}

/// Trains from a freshly initialized model; reproducible for a fixed seed.
pub fn train(cfg: ModelConfig, data: &[Prepared], tc: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(ModelError::invalid("training set", "no samples"));
    }
    if tc.batch == 0 {
        return Err(ModelError::invalid("train config", "batch must be positive"));
    }
    let mut model = EyeModel::new(cfg)?;
    if tc.init_head_from_data {
        init_head(&mut model, data);
    }
    let mut adam = Adam::with_hyper(&model.params, tc.schedule.initial, tc.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5eed_d50f);
    let mut order: Vec<usize> = Vec::new();
    let mut history = Vec::with_capacity(tc.steps as usize);
    if let Some(dir) = &tc.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| ModelError::invalid("output directory", format!("{}: {e}", dir.display())))?;
    }
    for step in 0..tc.steps {
        let mut batch = Vec::with_capacity(tc.batch);
        while batch.len() < tc.batch {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            batch.push(&data[order.pop().unwrap()]);
        }
        let lr = tc.schedule.at(step);
        adam.lr = lr;
        let dropout = (model.cfg.dropout > 0.0).then_some((model.cfg.dropout, &mut drop_rng));
        let (mut g, bp, loss, parts) = batch_loss(&model, &batch, dropout)?;
        let diverged = |model: &EyeModel, adam: &Adam| -> ModelError {
            let checkpoint = tc.out_dir.as_ref().and_then(|d| {
                let p = d.join("last_good.ckpt");
                save(model, step, adam, &p).ok().map(|_| p)
            });
            ModelError::Diverged { step, checkpoint }
        };
        if !parts.total.is_finite() {
            return Err(diverged(&model, &adam));
        }
        g.backward(loss)?;
        let grads = bp.grads(&g);
        if grads.iter().any(|t| !t.is_finite()) {
            return Err(diverged(&model, &adam));
        }
        adam.step(&mut model.params, &grads)?;
        history.push(HistoryRow { step, lr, loss: parts });
        if step % 100 == 0 {
            log::info!("step {step} lr {lr:.3e} loss {:.4} (sim {:.4} len {:.4} f {:.4} v {:.4})", parts.total, parts.sim, parts.len, parts.f, parts.v);
        }
        if let Some(dir) = &tc.out_dir {
            if tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0 {
                save(&model, step + 1, &adam, &dir.join(format!("step_{:06}.ckpt", step + 1)))?;
            }
        }
    }
    Ok(TrainOutcome { model, history, optimizer: adam })
}

/// Mean loss over `data` without updating anything.
pub fn evaluate_loss(model: &EyeModel, data: &[Prepared]) -> Result<LossBreakdown> {
    let mut sum = LossBreakdown::default();
    for s in data {
        let (_, _, _, b) = batch_loss(model, &[s], None)?;
        sum.add(&b);
    }
    Ok(sum.scaled(1.0 / data.len().max(1) as f64))
}
