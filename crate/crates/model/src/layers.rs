//! Parameterized building blocks recorded onto a [`Graph`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use typegaze_autodiff::{BoundParams, Graph, ParamId, ParamStore, Tensor, Var};

use crate::error::Result;

/// Forward-pass state shared by every layer call.
pub struct Pass<'a> {
    pub g: &'a mut Graph,
    pub bp: &'a BoundParams,
    /// Present only while training with dropout.
    pub dropout: Option<(f64, &'a mut ChaCha8Rng)>,
}

impl Pass<'_> {
    pub fn p(&self, id: ParamId) -> Var {
        self.bp.var(id)
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some((p, rng)) = self.dropout.as_mut() else { return Ok(x) };
        let p = *p;
        if p <= 0.0 {
            return Ok(x);
        }
        let shape = self.g.shape(x).to_vec();
        let n = shape.iter().product();
        let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) }).collect();
        let m = self.g.constant(Tensor::new(shape, mask)?);
        Ok(self.g.mul(x, m)?)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            w: ps.add(format!("{name}.w"), uniform(rng, &[fan_in, fan_out], bound)),
            b: ps.add(format!("{name}.b"), Tensor::zeros(&[fan_out])),
        }
    }

    /// `x [rows, in]` to `[rows, out]`.
    pub fn forward(&self, p: &mut Pass, x: Var) -> Result<Var> {
        let y = p.g.matmul(x, p.bp.var(self.w))?;
        Ok(p.g.add(y, p.bp.var(self.b))?)
    }
}

/// Layer normalization over the last axis with a learned gain and bias.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize) -> Self {
        Norm {
            gain: ps.add(format!("{name}.gain"), Tensor::full(&[d], 1.0)),
            bias: ps.add(format!("{name}.bias"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, p: &mut Pass, x: Var) -> Result<Var> {
        let n = p.g.layer_norm(x, 1e-5)?;
        let s = p.g.mul(n, p.bp.var(self.gain))?;
        Ok(p.g.add(s, p.bp.var(self.bias))?)
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

/// Output of one attention call; `weights` holds one `[queries, keys]` matrix per head.
pub struct Attended {
    pub out: Var,
    pub weights: Vec<Var>,
}

impl Attention {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d: usize, heads: usize) -> Self {
        Attention {
            heads,
            q: Linear::new(ps, rng, &format!("{name}.q"), d, d),
            k: Linear::new(ps, rng, &format!("{name}.k"), d, d),
            v: Linear::new(ps, rng, &format!("{name}.v"), d, d),
            o: Linear::new(ps, rng, &format!("{name}.o"), d, d),
        }
    }

    /// Scaled dot-product attention of `query [m, d]` over `kv [n, d]`.
    pub fn forward(&self, p: &mut Pass, query: Var, kv: Var) -> Result<Attended> {
        let d = p.g.shape(query)[1];
        let dh = d / self.heads;
        let q = self.q.forward(p, query)?;
        let k = self.k.forward(p, kv)?;
        let v = self.v.forward(p, kv)?;
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = p.g.slice(q, 1, h * dh, (h + 1) * dh)?;
            let kh = p.g.slice(k, 1, h * dh, (h + 1) * dh)?;
            let vh = p.g.slice(v, 1, h * dh, (h + 1) * dh)?;
            let kt = p.g.transpose(kh)?;
            let s = p.g.matmul(qh, kt)?;
            let s = p.g.scale(s, 1.0 / (dh as f64).sqrt());
            let a = p.g.softmax(s, 1)?;
            outs.push(p.g.matmul(a, vh)?);
            weights.push(a);
        }
        let cat = if outs.len() == 1 { outs[0] } else { p.g.concat(&outs, 1)? };
        Ok(Attended { out: self.o.forward(p, cat)?, weights })
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d: usize, hidden: usize) -> Self {
        FeedForward {
            up: Linear::new(ps, rng, &format!("{name}.up"), d, hidden),
            down: Linear::new(ps, rng, &format!("{name}.down"), hidden, d),
        }
    }

    pub fn forward(&self, p: &mut Pass, x: Var) -> Result<Var> {
        let h = self.up.forward(p, x)?;
        let h = p.g.gelu(h);
        let h = p.dropout(h)?;
        self.down.forward(p, h)
    }
}

/// Sinusoidal position code, `[len, d]`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 * rate;
            data[pos * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Tensor::new(vec![len, d], data).expect("shape and data agree")
}
