//! Backpropagation through time over the unrolled graph.
//!
//! Nodes are visited in reverse topological order: layers from last to
//! first, and within a layer time steps from last to first. Each node pushes
//! its adjoint to its parents. LIF layers are unrolled in their state form
//!
//! ```text
//! u[n] = alpha·u[n-1] + W·s_in[n] - theta·s[n-1],   s[n] = f_s(u[n])
//! ```
//!
//! and FIR layers in their convolutional form with explicit `epsilon` and
//! `nu` edges. The code is deliberately independent of the vectorized
//! engines: it never forms `p = epsilon ⊙ e` or the `sigma` blocks.

use ndarray::{Array1, Array2};

use crate::error::Result;
use crate::forward::{DenseLayer, LayerTrace, Network, NetworkTrace};
use crate::grad::{check_trace, GradientReport, LayerSignals};
use crate::neuron::{surrogate_value, SrmKernels};
use crate::signal::CausalKernel;
use crate::train::{LossGrad, LossGradKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BpttOptions {
    /// Follow the `s[k] -> u[n]` reset edges. Without them the result is the
    /// reset-free approximation.
    pub reset_edges: bool,
}

impl Default for BpttOptions {
    fn default() -> Self {
        Self { reset_edges: true }
    }
}

pub fn backward_network_bptt(net: &Network, trace: &NetworkTrace, loss_grad: &LossGrad) -> Result<GradientReport> {
    backward_network_bptt_with(net, trace, loss_grad, BpttOptions::default())
}

pub fn backward_network_bptt_with(
    net: &Network,
    trace: &NetworkTrace,
    loss_grad: &LossGrad,
    opts: BpttOptions,
) -> Result<GradientReport> {
    check_trace(net, trace, loss_grad)?;
    let depth = net.depth();
    let t = trace.steps();

    // Adjoint of the last layer's spikes from the output nodes.
    let mut s_bar = match loss_grad.kind {
        LossGradKind::RawSpikes => loss_grad.values.clone(),
        LossGradKind::FilteredOutput => push_output_filter(&net.last().kernels, &loss_grad.values),
    };

    let mut grads = vec![Array2::zeros((0, 0)); depth];
    let mut signals = Vec::with_capacity(depth);
    for l in (0..depth).rev() {
        let layer = &net.layers()[l];
        let tr = &trace.layers[l];
        let input = if l == 0 { &trace.input } else { &trace.layers[l - 1].s };
        let sweep = match &layer.kernels {
            SrmKernels::Lif(p) => sweep_state_form(layer, tr, input, s_bar, p.alpha(), p.theta(), opts),
            SrmKernels::Fir { epsilon, nu } => sweep_conv_form(layer, tr, s_bar, epsilon, nu, t, opts),
        };
        grads[l] = sweep.w_bar;
        s_bar = sweep.s_in_bar;
        signals.push(LayerSignals { d: sweep.z_bar, e_in: sweep.a_in_bar });
    }
    signals.reverse();
    Ok(GradientReport::new(grads, Some(signals)))
}

struct Sweep {
    w_bar: Array2<f64>,
    s_in_bar: Array2<f64>,
    z_bar: Array2<f64>,
    a_in_bar: Array2<f64>,
}

/// Output node `a[m] = Σ_k epsilon_{m-k} s[k]` pushes to every `s[k<=m]`.
fn push_output_filter(kernels: &SrmKernels, a_bar: &Array2<f64>) -> Array2<f64> {
    let (nn, t) = a_bar.dim();
    let mut s_bar = Array2::zeros((nn, t));
    match kernels {
        SrmKernels::Lif(p) => {
            // a[m] = alpha·a[m-1] + s[m]: carry the adjoint of a backwards.
            for i in 0..nn {
                let mut carry = 0.0;
                for m in (0..t).rev() {
                    carry = a_bar[[i, m]] + p.alpha() * carry;
                    s_bar[[i, m]] += carry;
                }
            }
        }
        SrmKernels::Fir { epsilon, .. } => {
            for i in 0..nn {
                for m in (0..t).rev() {
                    let g = a_bar[[i, m]];
                    for (lag, &w) in epsilon.taps().iter().enumerate().take(m + 1) {
                        s_bar[[i, m - lag]] += w * g;
                    }
                }
            }
        }
    }
    s_bar
}

fn sweep_state_form(
    layer: &DenseLayer,
    tr: &LayerTrace,
    input: &Array2<f64>,
    mut s_bar: Array2<f64>,
    alpha: f64,
    theta: f64,
    opts: BpttOptions,
) -> Sweep {
    let (nn, t) = tr.u.dim();
    let n_in = layer.inputs();
    let w = &layer.weights;
    let mut w_bar = Array2::<f64>::zeros((nn, n_in));
    let mut s_in_bar = Array2::<f64>::zeros((n_in, t));
    let mut u_bar_hist = Array2::<f64>::zeros((nn, t));
    let mut u_next_bar = Array1::<f64>::zeros(nn);

    for n in (0..t).rev() {
        let mut u_bar = Array1::<f64>::zeros(nn);
        for i in 0..nn {
            // s[n] is consumed by u[n+1] through the reset edge
            if opts.reset_edges && n + 1 < t {
                s_bar[[i, n]] += -theta * u_next_bar[i];
            }
            let du = surrogate_value(&layer.surrogate, tr.u[[i, n]]) * s_bar[[i, n]];
            // u[n] is consumed by s[n] and by u[n+1] through the leak
            u_bar[i] = du + alpha * u_next_bar[i];
        }
        // u[n] <- W·s_in[n]
        for i in 0..nn {
            let g = u_bar[i];
            if g == 0.0 {
                continue;
            }
            for j in 0..n_in {
                w_bar[[i, j]] += g * input[[j, n]];
                s_in_bar[[j, n]] += w[[i, j]] * g;
            }
        }
        u_bar_hist.column_mut(n).assign(&u_bar);
        u_next_bar = u_bar;
    }

    // The state form has no explicit z or a_in nodes; recover their adjoints
    // for inspection only: z_bar[n] = u_bar[n] - alpha·u_bar[n+1].
    let mut z_bar = u_bar_hist.clone();
    for n in 0..t.saturating_sub(1) {
        for i in 0..nn {
            z_bar[[i, n]] -= alpha * u_bar_hist[[i, n + 1]];
        }
    }
    let a_in_bar = w.t().dot(&z_bar);
    Sweep { w_bar, s_in_bar, z_bar, a_in_bar }
}

fn sweep_conv_form(
    layer: &DenseLayer,
    tr: &LayerTrace,
    mut s_bar: Array2<f64>,
    epsilon: &CausalKernel,
    nu: &CausalKernel,
    t: usize,
    opts: BpttOptions,
) -> Sweep {
    let nn = tr.u.nrows();
    let n_in = layer.inputs();
    let w = &layer.weights;
    let mut w_bar = Array2::<f64>::zeros((nn, n_in));
    let mut s_in_bar = Array2::<f64>::zeros((n_in, t));
    let mut z_bar = Array2::<f64>::zeros((nn, t));
    let mut a_in_bar = Array2::<f64>::zeros((n_in, t));

    for n in (0..t).rev() {
        // s[n]: all consumers (u[m>n], downstream a[m>=n]) are already done.
        for i in 0..nn {
            let u_bar = surrogate_value(&layer.surrogate, tr.u[[i, n]]) * s_bar[[i, n]];
            // u[n] = z[n] + Σ_j nu_j s[n-1-j]
            z_bar[[i, n]] = u_bar;
            if opts.reset_edges {
                for (j, &c) in nu.taps().iter().enumerate() {
                    if j + 1 > n {
                        break;
                    }
                    s_bar[[i, n - 1 - j]] += c * u_bar;
                }
            }
        }
        // z[n] = W a_in[n]
        for i in 0..nn {
            let g = z_bar[[i, n]];
            if g == 0.0 {
                continue;
            }
            for j in 0..n_in {
                w_bar[[i, j]] += g * tr.a_in[[j, n]];
                a_in_bar[[j, n]] += w[[i, j]] * g;
            }
        }
        // a_in[n] = Σ_lag epsilon_lag s_in[n-lag]
        for j in 0..n_in {
            let g = a_in_bar[[j, n]];
            for (lag, &c) in epsilon.taps().iter().enumerate().take(n + 1) {
                s_in_bar[[j, n - lag]] += c * g;
            }
        }
    }
    Sweep { w_bar, s_in_bar, z_bar, a_in_bar }
}
