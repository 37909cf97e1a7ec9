use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compares the reverse-mode gradient of a scalar function against
/// central finite differences at `x`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let out = f(&mut g, v)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let v = g.variable(x.clone());
    let out = f(&mut g, v)?;
    let value = g.value(out).item();
    if !value.is_finite() {
        return Err(AutodiffError::NonFinite {
            what: "function value".into(),
        });
    }
    g.backward(out)?;
    let analytic = g
        .grad(v)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()))
        .into_data();

    let mut numeric = Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let hi = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let lo = eval(&probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((hi - lo) / (2.0 * eps));
    }

    let mut max_rel_error: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        if !a.is_finite() || !n.is_finite() {
            return Err(AutodiffError::NonFinite {
                what: "gradient".into(),
            });
        }
        let scale = a.abs().max(n.abs()).max(REL_ERROR_FLOOR);
        max_rel_error = max_rel_error.max((a - n).abs() / scale);
    }
    Ok(GradCheck {
        max_rel_error,
        analytic,
        numeric,
    })
}
