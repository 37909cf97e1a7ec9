//! The keypress-to-scanpath network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use typegaze_autodiff::{Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};
use typegaze_core::{HumanParams, KeypressLog, ScreenGeometry};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::layers::{positional_encoding, Attention, FeedForward, Linear, Norm, Pass};

/// Raw head columns per slot.
pub const HEAD_WIDTH: usize = 7;
/// Floor added to positive-mapped outputs.
pub const MIN_SIGMA: f64 = 1e-3;
/// Shortest predicted fixation, seconds.
pub const MIN_DURATION_S: f64 = 1e-3;

pub const EYE_MODEL_KIND: &str = "eye-model";

/// Per-tap input features `(x / width, y / height, iki / 1000)`, `[taps, 3]`.
/// The first tap has interval 0.
pub fn tap_features(log: &KeypressLog, geom: &ScreenGeometry) -> Result<Tensor> {
    if log.taps.is_empty() {
        return Err(ModelError::EmptyLog);
    }
    let mut data = Vec::with_capacity(log.taps.len() * 3);
    let mut prev = log.taps[0].time_ms;
    for t in &log.taps {
        data.extend([t.x / geom.width, t.y / geom.height, (t.time_ms - prev) / 1000.0]);
        prev = t.time_ms;
    }
    Ok(Tensor::new(vec![log.taps.len(), 3], data)?)
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ff: FeedForward,
}

#[derive(Clone, Debug)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross: Attention,
    norm3: Norm,
    ff: FeedForward,
}

/// Graph handles of the mapped head outputs, each `[slots, 1]`.
/// Positions are in screen fractions, durations in seconds.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    pub mx: Var,
    pub my: Var,
    pub sx: Var,
    pub sy: Var,
    pub mt: Var,
    pub st: Var,
    pub logit: Var,
}

impl Heads {
    /// Maps raw `[slots, 7]` outputs: sigmoid for means of position, softplus for
    /// durations and standard deviations, identity for the validity logit.
    pub fn from_raw(g: &mut Graph, raw: Var) -> Result<Heads> {
        let col = |g: &mut Graph, c: usize| g.slice(raw, 1, c, c + 1);
        let (x, y, sx, sy, t, st, s) = (col(g, 0)?, col(g, 1)?, col(g, 2)?, col(g, 3)?, col(g, 4)?, col(g, 5)?, col(g, 6)?);
        let pos = |g: &mut Graph, v: Var, floor: f64| {
            let sp = g.softplus(v);
            g.add_scalar(sp, floor)
        };
        Ok(Heads {
            mx: g.sigmoid(x),
            my: g.sigmoid(y),
            sx: pos(g, sx, MIN_SIGMA),
            sy: pos(g, sy, MIN_SIGMA),
            mt: pos(g, t, MIN_DURATION_S),
            st: pos(g, st, MIN_SIGMA),
            logit: s,
        })
    }
}

/// Head outputs as plain values, one entry per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationPrediction {
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub sd_x: Vec<f64>,
    pub sd_y: Vec<f64>,
    pub mean_duration_s: Vec<f64>,
    pub sd_duration_s: Vec<f64>,
    pub validity_logit: Vec<f64>,
}

impl FixationPrediction {
    pub fn from_heads(g: &Graph, h: &Heads) -> Self {
        let v = |x: Var| g.value(x).data().to_vec();
        FixationPrediction {
            mean_x: v(h.mx),
            mean_y: v(h.my),
            sd_x: v(h.sx),
            sd_y: v(h.sy),
            mean_duration_s: v(h.mt),
            sd_duration_s: v(h.st),
            validity_logit: v(h.logit),
        }
    }

    pub fn slots(&self) -> usize {
        self.mean_x.len()
    }
}

/// Zero-padded `[max_taps, d_model]` tap embeddings and the mask of real taps.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTaps {
    pub features: Tensor,
    pub mask: Vec<bool>,
}

/// Fused tap sequence and the per-head attention of the parameter query.
#[derive(Clone, Debug, PartialEq)]
pub struct Fused {
    pub features: Tensor,
    /// One `[1, taps]` matrix per head; empty when fusion is disabled.
    pub weights: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct EyeModel {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    tap_in: Linear,
    theta_in: Linear,
    theta_out: Linear,
    fuse: Attention,
    encoder: Vec<EncoderLayer>,
    enc_norm: Norm,
    slots: ParamId,
    decoder: Vec<DecoderLayer>,
    dec_norm: Norm,
    head: Linear,
}

impl EyeModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamStore::new();
        let (d, h) = (cfg.d_model, cfg.n_heads);
        let tap_in = Linear::new(&mut ps, &mut rng, "tap_in", 3, d);
        let theta_in = Linear::new(&mut ps, &mut rng, "theta_in", 3, d);
        let theta_out = Linear::new(&mut ps, &mut rng, "theta_out", d, d);
        let fuse = Attention::new(&mut ps, &mut rng, "fuse", d, h);
        let encoder = (0..cfg.n_encoder_layers)
            .map(|i| EncoderLayer {
                norm1: Norm::new(&mut ps, &format!("enc{i}.norm1"), d),
                attn: Attention::new(&mut ps, &mut rng, &format!("enc{i}.attn"), d, h),
                norm2: Norm::new(&mut ps, &format!("enc{i}.norm2"), d),
                ff: FeedForward::new(&mut ps, &mut rng, &format!("enc{i}.ff"), d, cfg.d_ff),
            })
            .collect();
        let enc_norm = Norm::new(&mut ps, "enc_norm", d);
        let slot_init = {
            use rand::Rng;
            let data = (0..cfg.max_fixations * d).map(|_| rng.random_range(-0.1..0.1)).collect();
            Tensor::new(vec![cfg.max_fixations, d], data)?
        };
        let slots = ps.add("slots", slot_init);
        let decoder = (0..cfg.n_decoder_layers)
            .map(|i| DecoderLayer {
                norm1: Norm::new(&mut ps, &format!("dec{i}.norm1"), d),
                self_attn: Attention::new(&mut ps, &mut rng, &format!("dec{i}.self"), d, h),
                norm2: Norm::new(&mut ps, &format!("dec{i}.norm2"), d),
                cross: Attention::new(&mut ps, &mut rng, &format!("dec{i}.cross"), d, h),
                norm3: Norm::new(&mut ps, &format!("dec{i}.norm3"), d),
                ff: FeedForward::new(&mut ps, &mut rng, &format!("dec{i}.ff"), d, cfg.d_ff),
            })
            .collect();
        let dec_norm = Norm::new(&mut ps, "dec_norm", d);
        let head = Linear::new(&mut ps, &mut rng, "head", d, HEAD_WIDTH);
        // small output weights so initial predictions sit near the bias
        for w in ps.get_mut(head.w).data_mut() {
            *w *= 0.1;
        }
        Ok(EyeModel { cfg, params: ps, tap_in, theta_in, theta_out, fuse, encoder, enc_norm, slots, decoder, dec_norm, head })
    }

    pub fn head_bias(&self) -> ParamId {
        self.head.b
    }

    /// Tap embeddings `[taps, d]`: projected features plus the position code.
    pub fn embed(&self, p: &mut Pass, features: &Tensor) -> Result<Var> {
        let n = features.shape()[0];
        if n > self.cfg.max_taps {
            return Err(ModelError::invalid("tap sequence", format!("{n} taps exceed max_taps {}", self.cfg.max_taps)));
        }
        let x = p.g.constant(features.clone());
        let x = self.tap_in.forward(p, x)?;
        let pe = p.g.constant(positional_encoding(n, self.cfg.d_model));
        Ok(p.g.add(x, pe)?)
    }

    /// Adds the attention context of the parameter query to every tap; identity when
    /// parameter inference is switched off.
    pub fn fuse(&self, p: &mut Pass, taps: Var, theta: &HumanParams) -> Result<(Var, Vec<Var>)> {
        if !self.cfg.use_param_inference {
            return Ok((taps, Vec::new()));
        }
        let t = p.g.constant(Tensor::new(vec![1, 3], theta.to_array().to_vec())?);
        let q = self.theta_in.forward(p, t)?;
        let q = p.g.relu(q);
        let q = self.theta_out.forward(p, q)?;
        let att = self.fuse.forward(p, q, taps)?;
        Ok((p.g.add(taps, att.out)?, att.weights))
    }

    /// Raw head outputs `[max_fixations, 7]`.
    pub fn forward(&self, p: &mut Pass, features: &Tensor, theta: &HumanParams) -> Result<Var> {
        let x = self.embed(p, features)?;
        let (mut x, _) = self.fuse(p, x, theta)?;
        for l in &self.encoder {
            let n = l.norm1.forward(p, x)?;
            let a = l.attn.forward(p, n, n)?.out;
            let a = p.dropout(a)?;
            x = p.g.add(x, a)?;
            let n = l.norm2.forward(p, x)?;
            let f = l.ff.forward(p, n)?;
            let f = p.dropout(f)?;
            x = p.g.add(x, f)?;
        }
        let memory = self.enc_norm.forward(p, x)?;
        let slots = p.p(self.slots);
        let pe = p.g.constant(positional_encoding(self.cfg.max_fixations, self.cfg.d_model));
        let mut y = p.g.add(slots, pe)?;
        for l in &self.decoder {
            let n = l.norm1.forward(p, y)?;
            let a = l.self_attn.forward(p, n, n)?.out;
            let a = p.dropout(a)?;
            y = p.g.add(y, a)?;
            let n = l.norm2.forward(p, y)?;
            let c = l.cross.forward(p, n, memory)?.out;
            let c = p.dropout(c)?;
            y = p.g.add(y, c)?;
            let n = l.norm3.forward(p, y)?;
            let f = l.ff.forward(p, n)?;
            let f = p.dropout(f)?;
            y = p.g.add(y, f)?;
        }
        let y = self.dec_norm.forward(p, y)?;
        self.head.forward(p, y)
    }

    /// Evaluates the network once without gradients.
    pub fn predict(&self, features: &Tensor, theta: &HumanParams) -> Result<FixationPrediction> {
        let mut g = Graph::new();
        let bp = self.params.bind(&mut g);
        let mut p = Pass { g: &mut g, bp: &bp, dropout: None };
        let raw = self.forward(&mut p, features, theta)?;
        let heads = Heads::from_raw(&mut g, raw)?;
        Ok(FixationPrediction::from_heads(&g, &heads))
    }

    pub fn encode_taps(&self, log: &KeypressLog, geom: &ScreenGeometry) -> Result<EncodedTaps> {
        let feats = tap_features(log, geom)?;
        let n = feats.shape()[0];
        let mut g = Graph::new();
        let bp = self.params.bind(&mut g);
        let mut p = Pass { g: &mut g, bp: &bp, dropout: None };
        let x = self.embed(&mut p, &feats)?;
        let d = self.cfg.d_model;
        let mut data = vec![0.0; self.cfg.max_taps * d];
        data[..n * d].copy_from_slice(g.value(x).data());
        let mask = (0..self.cfg.max_taps).map(|i| i < n).collect();
        Ok(EncodedTaps { features: Tensor::new(vec![self.cfg.max_taps, d], data)?, mask })
    }

    /// Fuses the real rows of already-embedded taps `[taps, d]` with `theta`.
    pub fn fuse_params(&self, tap_features: &Tensor, theta: &HumanParams) -> Result<Fused> {
        theta.validate()?;
        let mut g = Graph::new();
        let bp = self.params.bind(&mut g);
        let mut p = Pass { g: &mut g, bp: &bp, dropout: None };
        let x = p.g.constant(tap_features.clone());
        let (out, weights) = self.fuse(&mut p, x, theta)?;
        Ok(Fused { features: g.value(out).clone(), weights: weights.iter().map(|&w| g.value(w).clone()).collect() })
    }

    pub fn to_checkpoint(&self, step: u64, optimizer: Option<typegaze_autodiff::Adam>) -> Result<Checkpoint> {
        let meta = serde_json::json!({ "kind": EYE_MODEL_KIND, "config": self.cfg });
        Ok(Checkpoint { step, metadata: meta.to_string(), params: self.params.clone(), optimizer })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg: ModelConfig = checkpoint_config(ck, EYE_MODEL_KIND)?;
        let mut m = EyeModel::new(cfg)?;
        load_params(&mut m.params, &ck.params)?;
        Ok(m)
    }
}

/// Reads the `config` of a checkpoint written for `kind`.
pub(crate) fn checkpoint_config<T: serde::de::DeserializeOwned>(ck: &Checkpoint, kind: &'static str) -> Result<T> {
    let meta: serde_json::Value = serde_json::from_str(&ck.metadata)
        .map_err(|e| ModelError::invalid("checkpoint metadata", e.to_string()))?;
    let found = meta.get("kind").and_then(|k| k.as_str()).unwrap_or("unknown");
    if found != kind {
        return Err(ModelError::WrongCheckpoint { expected: kind, found: found.to_string() });
    }
    serde_json::from_value(meta["config"].clone()).map_err(|e| ModelError::invalid("checkpoint config", e.to_string()))
}

/// Copies stored values into a freshly built store, checking names and shapes.
pub(crate) fn load_params(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if dst.len() != src.len() {
        return Err(ModelError::invalid("checkpoint", format!("{} tensors, model has {}", src.len(), dst.len())));
    }
    for (i, (name, t)) in src.iter().enumerate() {
        let id = ParamId(i);
        if dst.name(id) != name || dst.get(id).shape() != t.shape() {
            return Err(ModelError::invalid(
                "checkpoint",
                format!("tensor {name} {:?} does not match {} {:?}", t.shape(), dst.name(id), dst.get(id).shape()),
            ));
        }
        *dst.get_mut(id) = t.clone();
    }
    Ok(())
}
