//! Amortized estimation of human parameters from aggregate typing metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use typegaze_autodiff::{Adam, Checkpoint, Graph, ParamStore, StepDecay, Tensor};
use typegaze_core::simulator::{simulate_user_trial, user_theta, SimConfig};
use typegaze_core::typing::compute_typing_metrics;
use typegaze_core::{HumanParams, KeyboardLayout, KeypressLog, TypingMetrics};

use crate::error::{ModelError, Result};
use crate::layers::{Linear, Pass};
use crate::network::{checkpoint_config, load_params};

pub const AMORTIZER_KIND: &str = "amortizer";
pub const MIN_TRAINING_PAIRS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmortizerConfig {
    pub hidden: Vec<usize>,
    pub n_users: usize,
    pub trials_per_user: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Fraction of pairs kept out of fitting for the reported error.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for AmortizerConfig {
    fn default() -> Self {
        AmortizerConfig {
            hidden: vec![32, 32],
            n_users: 5000,
            trials_per_user: 5,
            epochs: 150,
            batch: 64,
            lr: 3e-3,
            weight_decay: 0.0,
            holdout_fraction: 0.05,
            seed: 0,
        }
    }
}

/// User-averaged metrics with the parameters that produced them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub metrics: TypingMetrics,
    pub theta: HumanParams,
}

/// Simulates `trials_per_user` trials for each of `n_users` users with sampled θ.
pub fn build_training_set(sim: &SimConfig, n_users: usize) -> Result<Vec<Pair>> {
    if n_users == 0 {
        return Err(ModelError::invalid("training set", "n_users must be at least 1"));
    }
    let mut cfg = sim.clone();
    cfg.sample_theta = true;
    cfg.validate()?;
    let mut out = Vec::with_capacity(n_users);
    for u in 0..n_users {
        let mut per = Vec::with_capacity(cfg.trials_per_user);
        for t in 0..cfg.trials_per_user {
            let tr = simulate_user_trial(&cfg, u, t)?;
            per.push(compute_typing_metrics(&tr.log, &cfg.layout)?);
        }
        let metrics = TypingMetrics::mean(&per).ok_or_else(|| ModelError::invalid("simulation", "no trials per user"))?;
        out.push(Pair { metrics, theta: user_theta(&cfg, u) });
    }
    Ok(out)
}

/// Per-component mean absolute error and the error of always predicting the training mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub mae: [f64; 3],
    pub baseline_mae: [f64; 3],
    pub mse: f64,
    pub baseline_mse: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_pairs: usize,
    pub heldout: Option<Recovery>,
    pub final_train_mse: f64,
}

#[derive(Clone, Debug)]
pub struct Amortizer {
    pub cfg: AmortizerConfig,
    pub params: ParamStore,
    layers: Vec<Linear>,
    /// Per-metric centering and scale in `TypingMetrics::to_array` order.
    pub norm_mean: [f64; 4],
    pub norm_scale: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct Stored {
    cfg: AmortizerConfig,
    norm_mean: [f64; 4],
    norm_scale: [f64; 4],
}

impl Amortizer {
    pub fn new(cfg: AmortizerConfig) -> Result<Self> {
        if cfg.hidden.contains(&0) {
            return Err(ModelError::invalid("amortizer config", "hidden widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamStore::new();
        let mut widths = vec![4];
        widths.extend(&cfg.hidden);
        widths.push(3);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut ps, &mut rng, &format!("mlp{i}"), w[0], w[1]))
            .collect();
        Ok(Amortizer { cfg, params: ps, layers, norm_mean: [0.0; 4], norm_scale: [1.0; 4] })
    }

    fn inputs(&self, metrics: &[TypingMetrics]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(metrics.len() * 4);
        for m in metrics {
            let a = m.to_array();
            for ((v, m), s) in a.iter().zip(&self.norm_mean).zip(&self.norm_scale) {
                data.push((v - m) / s);
            }
        }
        Ok(Tensor::new(vec![metrics.len(), 4], data)?)
    }

    fn forward(&self, p: &mut Pass, x: Tensor) -> Result<typegaze_autodiff::Var> {
        let mut h = p.g.constant(x);
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(p, h)?;
            h = if i + 1 < self.layers.len() { p.g.tanh(h) } else { p.g.sigmoid(h) };
        }
        Ok(h)
    }

    /// θ estimates in `[0, 1]^3`, one row per metrics vector.
    pub fn predict(&self, metrics: &[TypingMetrics]) -> Result<Vec<[f64; 3]>> {
        let mut g = Graph::new();
        let bp = self.params.bind(&mut g);
        let mut p = Pass { g: &mut g, bp: &bp, dropout: None };
        let out = self.forward(&mut p, self.inputs(metrics)?)?;
        Ok(g.value(out).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Averages the metrics of `trials` and maps them to θ.
    pub fn infer_theta(&self, trials: &[KeypressLog], layout: &KeyboardLayout) -> Result<HumanParams> {
        let metrics: Vec<TypingMetrics> = trials
            .iter()
            .filter(|l| l.taps.len() >= 2 && !l.reference_text.is_empty())
            .map(|l| compute_typing_metrics(l, layout))
            .collect::<std::result::Result<_, _>>()?;
        let mean = TypingMetrics::mean(&metrics).ok_or_else(|| ModelError::invalid("trials", "no trial with two taps and a reference text"))?;
        let [e, f, l] = self.predict(&[mean])?[0];
        Ok(HumanParams::new(e.clamp(0.0, 1.0), f.clamp(0.0, 1.0), l.clamp(0.0, 1.0))?)
    }

    pub fn evaluate(&self, pairs: &[Pair], reference_mean: [f64; 3]) -> Result<Recovery> {
        let pred = self.predict(&pairs.iter().map(|p| p.metrics).collect::<Vec<_>>())?;
        let mut mae = [0.0; 3];
        let mut base = [0.0; 3];
        let (mut mse, mut bmse) = (0.0, 0.0);
        for (p, q) in pairs.iter().zip(&pred) {
            let t = p.theta.to_array();
            for k in 0..3 {
                mae[k] += (q[k] - t[k]).abs();
                base[k] += (reference_mean[k] - t[k]).abs();
                mse += (q[k] - t[k]).powi(2);
                bmse += (reference_mean[k] - t[k]).powi(2);
            }
        }
        let n = pairs.len().max(1) as f64;
        Ok(Recovery {
            mae: mae.map(|v| v / n),
            baseline_mae: base.map(|v| v / n),
            mse: mse / (3.0 * n),
            baseline_mse: bmse / (3.0 * n),
            n: pairs.len(),
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let stored = Stored { cfg: self.cfg.clone(), norm_mean: self.norm_mean, norm_scale: self.norm_scale };
        let meta = serde_json::json!({ "kind": AMORTIZER_KIND, "config": stored });
        Ok(Checkpoint { step: 0, metadata: meta.to_string(), params: self.params.clone(), optimizer: None })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let stored: Stored = checkpoint_config(ck, AMORTIZER_KIND)?;
        let mut a = Amortizer::new(stored.cfg)?;
        a.norm_mean = stored.norm_mean;
        a.norm_scale = stored.norm_scale;
        load_params(&mut a.params, &ck.params)?;
        Ok(a)
    }
}

fn theta_mean(pairs: &[Pair]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for p in pairs {
        for (a, v) in m.iter_mut().zip(p.theta.to_array()) {
            *a += v;
        }
    }
    m.map(|v| v / pairs.len().max(1) as f64)
}

/// Fits the regressor with squared error on held-in pairs and reports held-out recovery.
/// The last `holdout_fraction` of `pairs` is held out.
pub fn fit(pairs: &[Pair], cfg: &AmortizerConfig) -> Result<(Amortizer, FitReport)> {
    let n_hold = ((pairs.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (train, hold) = pairs.split_at(pairs.len() - n_hold.min(pairs.len()));
    if train.len() < MIN_TRAINING_PAIRS {
        return Err(ModelError::invalid("training set", format!("{} pairs, need at least {MIN_TRAINING_PAIRS}", train.len())));
    }
    if cfg.batch == 0 {
        return Err(ModelError::invalid("amortizer config", "batch must be positive"));
    }
    let mut a = Amortizer::new(cfg.clone())?;
    for k in 0..4 {
        let v: Vec<f64> = train.iter().map(|p| p.metrics.to_array()[k]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        a.norm_mean[k] = mean;
        a.norm_scale[k] = if sd > 1e-12 { sd } else { 1.0 };
    }
    let steps_per_epoch = train.len().div_ceil(cfg.batch) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    // decays to about 5% of the initial rate over the run
    let schedule = StepDecay { initial: cfg.lr, factor: 0.97, every: (total_steps / 100).max(1) };
    let mut adam = Adam::with_hyper(&a.params, cfg.lr, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa11_0c8);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    let mut last = f64::NAN;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let metrics: Vec<TypingMetrics> = chunk.iter().map(|&i| train[i].metrics).collect();
            let target: Vec<f64> = chunk.iter().flat_map(|&i| train[i].theta.to_array()).collect();
            let mut g = Graph::new();
            let bp = a.params.bind(&mut g);
            let mut p = Pass { g: &mut g, bp: &bp, dropout: None };
            let out = a.forward(&mut p, a.inputs(&metrics)?)?;
            let y = g.constant(Tensor::new(vec![chunk.len(), 3], target)?);
            let d = g.sub(out, y)?;
            let sq = g.square(d);
            let loss = g.mean(sq);
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(ModelError::Diverged { step, checkpoint: None });
            }
            epoch_loss += value * chunk.len() as f64;
            g.backward(loss)?;
            adam.lr = schedule.at(step);
            adam.step(&mut a.params, &bp.grads(&g))?;
            step += 1;
        }
        last = epoch_loss / train.len() as f64;
    }
    let heldout = if hold.is_empty() { None } else { Some(a.evaluate(hold, theta_mean(train))?) };
    Ok((a, FitReport { train_pairs: train.len(), heldout, final_train_mse: last }))
}
