//! Neuron parameterizations, spike generation and surrogate derivatives.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, CausalKernel};

/// Leaky integrate-and-fire parameters. `alpha = 1` is the non-leaky IF neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    tau: f64,
    dt: f64,
    theta: f64,
    alpha: f64,
}

impl LifParams {
    /// Membrane time constant `tau` and step `dt` in seconds. `tau = ∞` gives IF.
    pub fn new(tau: f64, dt: f64, theta: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
        }
        if tau.is_nan() || tau <= 0.0 {
            return Err(Error::InvalidParam(format!("tau must be positive, got {tau}")));
        }
        check_theta(theta)?;
        let alpha = if tau.is_infinite() { 1.0 } else { (-dt / tau).exp() };
        Ok(Self { tau, dt, theta, alpha })
    }

    pub fn integrate_and_fire(dt: f64, theta: f64) -> Result<Self> {
        Self::new(f64::INFINITY, dt, theta)
    }

    /// Builds the parameters from the decay factor directly.
    pub fn from_alpha(alpha: f64, theta: f64, dt: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParam(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        let tau = if alpha == 1.0 { f64::INFINITY } else { -dt / alpha.ln() };
        let mut p = Self::new(tau, dt, theta)?;
        // keep the caller's alpha bit-exact rather than round-tripping through ln/exp
        p.alpha = alpha;
        Ok(p)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_leaky(&self) -> bool {
        self.alpha < 1.0
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("threshold must be positive, got {theta}")))
    }
}

/// Spike-response kernel `epsilon` and reset kernel `nu` of a layer.
#[derive(Debug, Clone, PartialEq)]
pub enum SrmKernels {
    /// Arbitrary finite kernels.
    Fir { epsilon: CausalKernel, nu: CausalKernel },
    /// `epsilon_n = alpha^n`, `nu_n = -theta · alpha^n`, unbounded support.
    Lif(LifParams),
}

impl SrmKernels {
    pub fn fir(epsilon: CausalKernel, nu: CausalKernel) -> Self {
        SrmKernels::Fir { epsilon, nu }
    }

    pub fn lif(params: LifParams) -> Self {
        SrmKernels::Lif(params)
    }

    pub fn lif_params(&self) -> Option<&LifParams> {
        match self {
            SrmKernels::Lif(p) => Some(p),
            SrmKernels::Fir { .. } => None,
        }
    }

    /// Response kernel materialized to at least `len` taps (LIF) or as stored (FIR).
    pub fn epsilon(&self, len: usize) -> CausalKernel {
        match self {
            SrmKernels::Fir { epsilon, .. } => epsilon.clone(),
            SrmKernels::Lif(p) => CausalKernel::geometric(1.0, p.alpha, len),
        }
    }

    pub fn nu(&self, len: usize) -> CausalKernel {
        match self {
            SrmKernels::Fir { nu, .. } => nu.clone(),
            SrmKernels::Lif(p) => CausalKernel::geometric(-p.theta, p.alpha, len),
        }
    }

    /// Same kernels with the reset kernel replaced by zero. LIF kernels become FIR.
    pub fn without_reset(&self, len: usize) -> Self {
        SrmKernels::Fir { epsilon: self.epsilon(len), nu: CausalKernel::new(vec![0.0]).unwrap() }
    }

    pub fn has_reset(&self) -> bool {
        match self {
            SrmKernels::Fir { nu, .. } => !nu.is_zero(),
            SrmKernels::Lif(_) => true,
        }
    }

    /// `epsilon ∗ x` per channel, O(T) for LIF kernels.
    pub fn filter(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            SrmKernels::Fir { epsilon, .. } => signal::conv_rows(epsilon, x),
            SrmKernels::Lif(p) => signal::geometric_filter_rows(p.alpha, x),
        }
    }

    /// `epsilon ⊙ e` per channel (correlation in time), O(T) for LIF kernels.
    pub fn filter_adjoint(&self, e: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            SrmKernels::Fir { epsilon, .. } => signal::correlate_rows(epsilon, e),
            SrmKernels::Lif(p) => signal::geometric_correlate_rows(p.alpha, e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateFamily {
    Exponential,
    PiecewiseLinear,
    TanhDerivative,
    SigmoidDerivative,
}

impl SurrogateFamily {
    pub const ALL: [SurrogateFamily; 4] = [
        SurrogateFamily::Exponential,
        SurrogateFamily::PiecewiseLinear,
        SurrogateFamily::TanhDerivative,
        SurrogateFamily::SigmoidDerivative,
    ];
}

/// Surrogate derivative used in place of the derivative of the step function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub family: SurrogateFamily,
    pub width: f64,
    pub theta: f64,
    pub scale: f64,
}

impl SurrogateSpec {
    pub fn new(family: SurrogateFamily, width: f64, theta: f64, scale: f64) -> Result<Self> {
        let spec = Self { family, width, theta, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidParam(format!("surrogate width must be positive, got {}", self.width)));
        }
        check_theta(self.theta)?;
        // scale = 0 is allowed: it switches gradients off entirely
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParam(format!("surrogate scale must be >= 0, got {}", self.scale)));
        }
        Ok(())
    }

    pub fn with_scale(self, scale: f64) -> Self {
        Self { scale, ..self }
    }
}

/// Heaviside step at the threshold: 1 iff `u >= theta`.
#[inline]
pub fn spike_fn(u: f64, theta: f64) -> f64 {
    if u >= theta {
        1.0
    } else {
        0.0
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Surrogate derivative `f'(u)`, including the gradient scale.
#[inline]
pub fn surrogate_value(spec: &SurrogateSpec, u: f64) -> f64 {
    let w = spec.width;
    let x = (u - spec.theta) / w;
    let base = match spec.family {
        SurrogateFamily::Exponential => (-x.abs()).exp() / (2.0 * w),
        SurrogateFamily::PiecewiseLinear => (1.0 - x.abs()).max(0.0) / w,
        SurrogateFamily::TanhDerivative => {
            let t = x.tanh();
            (1.0 - t * t) / (2.0 * w)
        }
        SurrogateFamily::SigmoidDerivative => {
            let s = logistic(x);
            s * (1.0 - s) / w
        }
    };
    spec.scale * base
}

/// Smooth spike function whose derivative is the sigmoid surrogate (scale 1).
pub fn soft_spike_fn(spec: &SurrogateSpec, u: f64) -> Result<f64> {
    match spec.family {
        SurrogateFamily::SigmoidDerivative => Ok(logistic((u - spec.theta) / spec.width)),
        other => Err(Error::Unsupported(format!(
            "soft spikes need the sigmoid surrogate, got {other:?}"
        ))),
    }
}
