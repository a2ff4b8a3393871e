//! Reset products of LIF neurons.
//!
//! For a LIF layer the influence of `z[m]` on the membrane at a later step
//! `n > m` is
//!
//! ```text
//! gamma_m[n] = -theta · f'[m] · chi_m[n],   chi_m[n] = Π_{k=m+1..n-1} (alpha - theta·f'[k])
//! ```
//!
//! The functions here evaluate both the product form and the step-by-step
//! recursions it is derived from, and measure how `chi` compares with the
//! geometric envelope `mu^(n-m-1)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::LifParams;

fn check_span(len: usize, m: usize, n: usize) -> Result<()> {
    if n <= m {
        return Err(Error::InvalidParam(format!("need n > m, got m = {m}, n = {n}")));
    }
    if n >= len {
        return Err(Error::Shape(format!("step {n} beyond a sequence of length {len}")));
    }
    Ok(())
}

/// `chi_m[n]` as the explicit product.
pub fn chi_closed_form(fprimes: &[f64], params: &LifParams, m: usize, n: usize) -> Result<f64> {
    check_span(fprimes.len(), m, n)?;
    let (alpha, theta) = (params.alpha(), params.theta());
    Ok(fprimes[m + 1..n].iter().map(|&f| alpha - theta * f).product())
}

/// `gamma_m[n] = -theta · f'[m] · chi_m[n]`.
pub fn gamma_closed_form(fprimes: &[f64], params: &LifParams, m: usize, n: usize) -> Result<f64> {
    Ok(-params.theta() * fprimes[m] * chi_closed_form(fprimes, params, m, n)?)
}

/// `chi_m[n]` for `n = m+1 .. T-1` from `chi_m[m+1] = 1`,
/// `chi_m[n+1] = chi_m[n]·(alpha - theta·f'[n])`.
pub fn chi_recursive(fprimes: &[f64], params: &LifParams, m: usize) -> Vec<f64> {
    let (alpha, theta) = (params.alpha(), params.theta());
    let mut out = Vec::with_capacity(fprimes.len().saturating_sub(m + 1));
    let mut chi = 1.0;
    for &f in fprimes.iter().skip(m + 1) {
        out.push(chi);
        chi *= alpha - theta * f;
    }
    out
}

/// `gamma_m[n]` for `n = m+1 .. T-1` from the leak/reset sum
/// `gamma_m[n] = -theta · Σ_{k=m..n-1} alpha^(n-1-k) · sigma_m[k]`, where
/// `sigma_m[m] = f'[m]` and `sigma_m[k] = f'[k]·gamma_m[k]` afterwards.
pub fn gamma_recursive(fprimes: &[f64], params: &LifParams, m: usize) -> Vec<f64> {
    let (alpha, theta) = (params.alpha(), params.theta());
    let mut out = Vec::with_capacity(fprimes.len().saturating_sub(m + 1));
    let mut acc = 0.0;
    let mut sigma_prev = fprimes.get(m).copied().unwrap_or(0.0);
    for &f in fprimes.iter().skip(m + 1) {
        acc = alpha * acc + sigma_prev;
        let gamma = -theta * acc;
        out.push(gamma);
        sigma_prev = f * gamma;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBoundParams {
    pub mu: f64,
    pub alpha: f64,
    pub theta: f64,
}

impl DecayBoundParams {
    pub fn new(mu: f64, params: &LifParams) -> Result<Self> {
        let (alpha, theta) = (params.alpha(), params.theta());
        if !(mu > 0.0 && mu <= alpha) {
            return Err(Error::InvalidParam(format!("mu must lie in (0, {alpha}], got {mu}")));
        }
        Ok(Self { mu, alpha, theta })
    }

    /// Largest surrogate value for which the bound holds, `(alpha - mu)/theta`.
    pub fn fprime_cap(&self) -> f64 {
        (self.alpha - self.mu) / self.theta
    }
}

pub fn clamp_fprimes(fprimes: &Array2<f64>, bound: &DecayBoundParams) -> Array2<f64> {
    let cap = bound.fprime_cap();
    fprimes.mapv(|f| f.clamp(0.0, cap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `max (chi_m[n] - mu^(n-m-1))` over neurons and pairs `n > m`.
    pub max_excess: f64,
    pub min_chi: f64,
    /// `max |chi_m[n]|` for each lag `n - m - 1`.
    pub max_abs_by_lag: Vec<f64>,
    /// Whether every `f'` lay in `[0, (alpha - mu)/theta]`.
    pub fprimes_in_range: bool,
}

impl DecayReport {
    /// Largest violation of `0 <= chi <= mu^k`; nonpositive when the bound holds.
    pub fn violation(&self) -> f64 {
        self.max_excess.max(-self.min_chi)
    }
}

/// Evaluates every `chi_m[n]` of a `neurons × T` surrogate sequence against
/// `mu^(n-m-1)`.
pub fn check_decay_bound(fprimes: &Array2<f64>, params: &LifParams, bound: &DecayBoundParams) -> DecayReport {
    let (nn, t) = fprimes.dim();
    let cap = bound.fprime_cap();
    let mut report = DecayReport {
        max_excess: f64::NEG_INFINITY,
        min_chi: f64::INFINITY,
        max_abs_by_lag: vec![0.0; t.saturating_sub(1)],
        fprimes_in_range: fprimes.iter().all(|&f| (0.0..=cap).contains(&f)),
    };
    for i in 0..nn {
        let row = fprimes.row(i).to_vec();
        for m in 0..t {
            for (lag, chi) in chi_recursive(&row, params, m).into_iter().enumerate() {
                report.max_excess = report.max_excess.max(chi - bound.mu.powi(lag as i32));
                report.min_chi = report.min_chi.min(chi);
                report.max_abs_by_lag[lag] = report.max_abs_by_lag[lag].max(chi.abs());
            }
        }
    }
    report
}
