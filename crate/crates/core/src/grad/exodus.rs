//! Exact vectorized backward pass.
//!
//! Within a layer, `u` and `s` are coupled through the reset kernel, so
//! `ds/dz` is obtained from the layer's implicit equations rather than a
//! plain chain rule. Writing `F = diag(f'(u))` and `N` for the strictly
//! lower-triangular Toeplitz operator `N[m][k] = nu_{m-1-k}`, the coupling
//! gives `(I - F N) ds = F dz`, hence
//!
//! ```text
//! sigma_n[m] = ds[m]/dz[n] = f'[m] · Σ_{k=n..m-1} nu_{m-1-k} · sigma_n[k]   (m > n)
//! sigma_n[n] = f'[n]
//! ```
//!
//! The production path never materializes `sigma`. It solves the transposed
//! system `d = F (I - Nᵀ F)⁻¹ p` by backward substitution, which costs
//! O(T·K) per neuron for a K-tap reset kernel and O(T) for LIF kernels,
//! where the substitution collapses to a single scalar accumulator:
//!
//! ```text
//! q[T-1] = 0
//! q[n]   = f'[n+1]·p[n+1] + (alpha - theta·f'[n+1])·q[n+1]
//! d[n]   = f'[n]·(p[n] - theta·q[n])
//! ```
//!
//! [`sigma_srm`] and [`sigma_lif_closed_form`] build the dense blocks for
//! verification.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::forward::{DenseLayer, LayerTrace, Network, NetworkTrace};
use crate::grad::{backward_vectorized, GradientReport, LayerSignals};
use crate::neuron::{LifParams, SrmKernels, SurrogateSpec};
use crate::signal::CausalKernel;
use crate::train::LossGrad;

/// Dense `ds/dz` blocks per neuron. Only the diagonal over neurons is
/// nonzero because the reset kernel acts on each neuron separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBlock {
    /// `[neuron, m, n] = ds[m]/dz[n]`, zero for `m < n`.
    entries: Array3<f64>,
}

impl SigmaBlock {
    /// `sigma_n[m]` for one neuron: influence of `z[n]` on `s[m]`.
    pub fn get(&self, neuron: usize, n: usize, m: usize) -> f64 {
        self.entries[[neuron, m, n]]
    }

    pub fn neurons(&self) -> usize {
        self.entries.dim().0
    }

    pub fn steps(&self) -> usize {
        self.entries.dim().1
    }

    /// The `T × T` matrix `ds/dz` of a single neuron, rows indexed by `s` time.
    pub fn neuron_matrix(&self, neuron: usize) -> Array2<f64> {
        self.entries.index_axis(ndarray::Axis(0), neuron).to_owned()
    }

    /// `d[n] = Σ_{m >= n} p[m] · sigma_n[m]` (O(T²) per neuron).
    pub fn contract(&self, p: &Array2<f64>) -> Array2<f64> {
        let (nn, t, _) = self.entries.dim();
        Array2::from_shape_fn((nn, t), |(i, n)| (n..t).map(|m| p[[i, m]] * self.entries[[i, m, n]]).sum())
    }

    pub fn max_abs_diff(&self, other: &SigmaBlock) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// `sigma` from the generic reset-kernel recursion, given `f'` (`neurons × T`).
pub fn sigma_from_fprimes(fprimes: &Array2<f64>, nu: &CausalKernel) -> SigmaBlock {
    let (nn, t) = fprimes.dim();
    let mut entries = Array3::zeros((nn, t, t));
    for i in 0..nn {
        for n in 0..t {
            entries[[i, n, n]] = fprimes[[i, n]];
            for m in n + 1..t {
                let mut acc = 0.0;
                for k in n..m {
                    acc += nu.tap(m - 1 - k) * entries[[i, k, n]];
                }
                entries[[i, m, n]] = fprimes[[i, m]] * acc;
            }
        }
    }
    SigmaBlock { entries }
}

/// `sigma` from the LIF closed form `-theta · f'[n] · f'[m] · chi_m[n]`
/// with `chi` accumulated as a running product.
pub fn sigma_lif_from_fprimes(fprimes: &Array2<f64>, alpha: f64, theta: f64) -> SigmaBlock {
    let (nn, t) = fprimes.dim();
    let mut entries = Array3::zeros((nn, t, t));
    for i in 0..nn {
        for m in 0..t {
            entries[[i, m, m]] = fprimes[[i, m]];
            let mut chi = 1.0;
            for n in m + 1..t {
                if n > m + 1 {
                    chi *= alpha - theta * fprimes[[i, n - 1]];
                }
                entries[[i, n, m]] = -theta * fprimes[[i, n]] * fprimes[[i, m]] * chi;
            }
        }
    }
    SigmaBlock { entries }
}

pub fn sigma_srm(trace: &LayerTrace, kernels: &SrmKernels, spec: &SurrogateSpec) -> SigmaBlock {
    let fp = trace.surrogate_grads(spec);
    sigma_from_fprimes(&fp, &kernels.nu(trace.steps()))
}

pub fn sigma_lif_closed_form(trace: &LayerTrace, params: &LifParams, spec: &SurrogateSpec) -> SigmaBlock {
    let fp = trace.surrogate_grads(spec);
    sigma_lif_from_fprimes(&fp, params.alpha(), params.theta())
}

/// `dL/dz` from `p = dL/ds` through the exact `ds/dz`, without forming it.
pub fn exodus_dz(kernels: &SrmKernels, fprimes: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    match kernels {
        SrmKernels::Lif(params) => lif_dz(params.alpha(), params.theta(), fprimes, p),
        SrmKernels::Fir { nu, .. } => fir_dz(nu, fprimes, p),
    }
}

fn lif_dz(alpha: f64, theta: f64, fp: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    let (nn, t) = fp.dim();
    let mut d = Array2::zeros((nn, t));
    for i in 0..nn {
        let mut q = 0.0;
        d[[i, t - 1]] = fp[[i, t - 1]] * p[[i, t - 1]];
        for n in (0..t - 1).rev() {
            let f_next = fp[[i, n + 1]];
            q = f_next * p[[i, n + 1]] + (alpha - theta * f_next) * q;
            d[[i, n]] = fp[[i, n]] * (p[[i, n]] - theta * q);
        }
    }
    d
}

fn fir_dz(nu: &CausalKernel, fp: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    let (nn, t) = fp.dim();
    if nu.is_zero() {
        return fp * p;
    }
    let taps = nu.taps();
    let mut d = Array2::zeros((nn, t));
    // y = p + Nᵀ F y solved from the last step backwards, with d = F y
    for i in 0..nn {
        for k in (0..t).rev() {
            let mut acc = p[[i, k]];
            for (j, &w) in taps.iter().enumerate() {
                let m = k + 1 + j;
                if m >= t {
                    break;
                }
                acc += w * d[[i, m]];
            }
            d[[i, k]] = fp[[i, k]] * acc;
        }
    }
    d
}

/// One layer of the backward pass. `out_kernels` are the kernels whose
/// `epsilon` filters this layer's spikes downstream (the next layer's, or
/// the layer's own for the network output); `e_out` is `dL/da` of that
/// filtered signal.
pub fn backward_layer_exodus(
    layer: &DenseLayer,
    trace: &LayerTrace,
    out_kernels: &SrmKernels,
    e_out: &Array2<f64>,
) -> Result<LayerSignals> {
    if e_out.dim() != trace.u.dim() {
        return Err(Error::Shape(format!(
            "error signal {:?} does not match layer output {:?}",
            e_out.dim(),
            trace.u.dim()
        )));
    }
    let p = out_kernels.filter_adjoint(e_out.view());
    let fp = trace.surrogate_grads(&layer.surrogate);
    let d = exodus_dz(&layer.kernels, &fp, &p);
    let e_in = layer.weights.t().dot(&d);
    Ok(LayerSignals { d, e_in })
}

pub fn backward_network_exodus(net: &Network, trace: &NetworkTrace, loss_grad: &LossGrad) -> Result<GradientReport> {
    backward_vectorized(net, trace, loss_grad, false, exodus_rule)
}

/// As [`backward_network_exodus`], also retaining `d` and `e` per layer.
pub fn backward_network_exodus_signals(
    net: &Network,
    trace: &NetworkTrace,
    loss_grad: &LossGrad,
) -> Result<GradientReport> {
    backward_vectorized(net, trace, loss_grad, true, exodus_rule)
}

fn exodus_rule(layer: &DenseLayer, tr: &LayerTrace, g_s: &Array2<f64>) -> Array2<f64> {
    let fp = tr.surrogate_grads(&layer.surrogate);
    exodus_dz(&layer.kernels, &fp, g_s)
}
