//! Primitive table for finite-difference checks, shared with other crates' tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typegaze_autodiff::{grad_check, Graph, Result, Tensor, Var};

pub const EPS: f64 = 1e-5;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Contracts `y` against fixed random weights so every output coordinate matters.
pub fn weigh(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, g.shape(y), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

pub type Prim = (&'static str, f64, f64, fn(&mut Graph, Var, &[usize]) -> Result<Var>);

pub fn primitives() -> Vec<Prim> {
    vec![
        ("matmul", -1.0, 1.0, |g, x, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let b = g.constant(random(&mut rng, &[s[1], 3], -1.0, 1.0));
            let l = g.matmul(x, b)?;
            let xt = g.transpose(x)?;
            g.matmul(xt, l)
        }),
        ("add", -2.0, 2.0, |g, x, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let row = g.constant(random(&mut rng, &[s[1]], -1.0, 1.0));
            let a = g.add(x, row)?;
            g.add(a, x)
        }),
        ("sub", -2.0, 2.0, |g, x, _| {
            let t = g.transpose(x)?;
            let t = g.transpose(t)?;
            let sq = g.square(x);
            g.sub(t, sq)
        }),
        ("multiply", -2.0, 2.0, |g, x, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let col = g.constant(random(&mut rng, &[s[0], 1], -1.0, 1.0));
            let a = g.mul(x, col)?;
            g.mul(a, x)
        }),
        ("divide", 0.5, 2.0, |g, x, _| {
            let one = g.scalar(1.0);
            let a = g.div(one, x)?;
            g.div(x, a)
        }),
        ("softmax", -2.0, 2.0, |g, x, _| g.softmax(x, 1)),
        ("softmax_axis0", -2.0, 2.0, |g, x, _| g.softmax(x, 0)),
        ("layer_norm", -2.0, 2.0, |g, x, _| g.layer_norm(x, 1e-5)),
        ("relu", -2.0, 2.0, |g, x, _| Ok(g.relu(x))),
        ("gelu", -3.0, 3.0, |g, x, _| Ok(g.gelu(x))),
        ("concat", -1.0, 1.0, |g, x, _| {
            let s = g.square(x);
            g.concat(&[x, s, x], 1)
        }),
        ("slice", -1.0, 1.0, |g, x, s| {
            let a = g.slice(x, 1, 0, s[1] - 1)?;
            let b = g.slice(x, 1, 1, s[1])?;
            g.mul(a, b)
        }),
        ("mean", -1.0, 1.0, |g, x, _| {
            let m = g.mean_axis(x, 0)?;
            let s = g.square(m);
            let all = g.mean(x);
            let t = g.mul(s, all)?;
            Ok(t)
        }),
        ("sum", -1.0, 1.0, |g, x, _| {
            let a = g.sum_axis(x, 1)?;
            Ok(g.square(a))
        }),
        ("sigmoid", -4.0, 4.0, |g, x, _| Ok(g.sigmoid(x))),
        ("log", 0.2, 3.0, |g, x, _| Ok(g.log(x))),
        ("square", -2.0, 2.0, |g, x, _| Ok(g.square(x))),
        ("sqrt", 0.2, 3.0, |g, x, _| Ok(g.sqrt(x))),
        ("exp", -2.0, 2.0, |g, x, _| Ok(g.exp(x))),
        ("tanh", -2.0, 2.0, |g, x, _| Ok(g.tanh(x))),
        ("abs", -2.0, 2.0, |g, x, _| Ok(g.abs(x))),
        ("softplus", -4.0, 4.0, |g, x, _| Ok(g.softplus(x))),
        ("scale_shift", -2.0, 2.0, |g, x, _| {
            let a = g.scale(x, -1.5);
            let b = g.add_scalar(a, 0.3);
            let n = g.neg(b);
            g.reshape(n, &[g.value(n).numel()])
        }),
    ]
}

/// Worst relative error per primitive over `instances` random shapes.
pub fn worst_primitive_errors(seed: u64, instances: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, lo, hi, f) in primitives() {
        let mut worst: f64 = 0.0;
        for trial in 0..instances {
            let shape = [rng.random_range(2..6usize), rng.random_range(2..6usize)];
            let x = random(&mut rng, &shape, lo, hi);
            let r = grad_check(
                |g, v| {
                    let y = f(g, v, &shape)?;
                    weigh(g, y, trial)
                },
                &x,
                EPS,
            )?;
            worst = worst.max(r.max_rel_error);
        }
        out.push((name, worst));
    }
    Ok(out)
}
