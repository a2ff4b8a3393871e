use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::GradientReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8 }
    }
}

/// First and second moment estimates for every weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, weights: &[Array2<f64>]) -> Self {
        let zeros: Vec<_> = weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        Self { config, m: zeros.clone(), v: zeros, step_count: 0 }
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves both the
/// weights and the state untouched and returns an error.
pub fn adam_step<'a, I>(state: &mut AdamState, grads: &GradientReport, weights: I) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Array2<f64>>,
{
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let weights: Vec<&mut Array2<f64>> = weights.into_iter().collect();
    if weights.len() != state.m.len() || grads.weight_grads.len() != state.m.len() {
        return Err(Error::Shape("optimizer state, gradients and weights disagree in length".into()));
    }
    for ((w, g), m) in weights.iter().zip(&grads.weight_grads).zip(&state.m) {
        if w.dim() != g.dim() || w.dim() != m.dim() {
            return Err(Error::Shape(format!("weights {:?} vs gradient {:?}", w.dim(), g.dim())));
        }
    }

    let AdamConfig { lr, beta1, beta2, eps_hat } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((w, g), m), v) in weights.into_iter().zip(&grads.weight_grads).zip(&mut state.m).zip(&mut state.v) {
        ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps_hat);
        });
    }
    Ok(())
}
