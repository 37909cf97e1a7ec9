use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 5e-5;
pub const DEFAULT_WEIGHT_DECAY: f64 = 4e-4;

/// Learning rate that drops by a fixed factor at every `every`-step boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub initial: f64,
    pub factor: f64,
    pub every: u64,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self {
            initial: DEFAULT_LR,
            factor: 0.97,
            every: 100,
        }
    }
}

impl StepDecay {
    pub fn at(&self, step: u64) -> f64 {
        self.initial * self.factor.powi((step / self.every) as i32)
    }
}

/// Learning rate of the default schedule at `step`.
pub fn lr_schedule(step: u64) -> f64 {
    StepDecay::default().at(step)
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Self::with_hyper(params, DEFAULT_LR, DEFAULT_WEIGHT_DECAY)
    }

    pub fn with_hyper(params: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update of every parameter. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(AutodiffError::Invalid {
                op: "adam_step",
                msg: format!(
                    "{} parameters, {} gradients, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        for (i, (p, g)) in params.values().iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(AutodiffError::NonFinite {
                    what: format!("gradient of parameter {}", params.name(crate::ParamId(i))),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = self.lr * self.weight_decay;
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for k in 0..p.len() {
                p[k] -= decay * p[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
