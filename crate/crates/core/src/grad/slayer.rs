//! Reset-free approximate backward pass.
//!
//! Identical to the exact pass except that `ds[m]/dz[n]` is taken to be zero
//! for `m != n`, so `d[n] = f'[n] · (epsilon ⊙ e)[n]`. The error signal and
//! the weight gradient are formed exactly as in the exact pass.

use ndarray::Array2;

use crate::error::Result;
use crate::forward::{DenseLayer, LayerTrace, Network, NetworkTrace};
use crate::grad::{backward_vectorized, GradientReport};
use crate::train::LossGrad;

pub fn backward_network_slayer(net: &Network, trace: &NetworkTrace, loss_grad: &LossGrad) -> Result<GradientReport> {
    backward_vectorized(net, trace, loss_grad, false, slayer_rule)
}

pub fn backward_network_slayer_signals(
    net: &Network,
    trace: &NetworkTrace,
    loss_grad: &LossGrad,
) -> Result<GradientReport> {
    backward_vectorized(net, trace, loss_grad, true, slayer_rule)
}

fn slayer_rule(layer: &DenseLayer, tr: &LayerTrace, g_s: &Array2<f64>) -> Array2<f64> {
    tr.surrogate_grads(&layer.surrogate) * g_s
}
