//! Backward engines over a recorded forward trace.
//!
//! All three engines consume the same [`NetworkTrace`] and produce a
//! [`GradientReport`] holding `dL/dW` for every layer:
//!
//! - [`exodus`]: exact vectorized backward pass through the reset loop.
//! - [`slayer`]: the same pass with reset contributions dropped.
//! - [`bptt`]: reverse traversal of the unrolled time graph, used as ground truth.

pub mod bptt;
pub mod exodus;
pub mod slayer;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{DenseLayer, LayerTrace, Network, NetworkTrace};
use crate::train::{LossGrad, LossGradKind};

pub use bptt::{backward_network_bptt, backward_network_bptt_with, BpttOptions};
pub use exodus::{backward_layer_exodus, backward_network_exodus, sigma_lif_closed_form, sigma_srm, SigmaBlock};
pub use slayer::backward_network_slayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exodus,
    Slayer,
    Bptt,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Exodus, Engine::Slayer, Engine::Bptt];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Exodus => "exodus",
            Engine::Slayer => "slayer",
            Engine::Bptt => "bptt",
        }
    }

    pub fn backward(self, net: &Network, trace: &NetworkTrace, loss_grad: &LossGrad) -> Result<GradientReport> {
        match self {
            Engine::Exodus => backward_network_exodus(net, trace, loss_grad),
            Engine::Slayer => backward_network_slayer(net, trace, loss_grad),
            Engine::Bptt => backward_network_bptt(net, trace, loss_grad),
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exodus" => Ok(Engine::Exodus),
            "slayer" => Ok(Engine::Slayer),
            "bptt" => Ok(Engine::Bptt),
            other => Err(Error::Config(format!("unknown engine {other:?}"))),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-layer back-propagated signals: `d = dL/dz` and `e = dL/da_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSignals {
    pub d: Array2<f64>,
    pub e_in: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// `dL/dW` per layer, same shapes as the weights.
    pub weight_grads: Vec<Array2<f64>>,
    /// RMS of each layer's weight gradient.
    pub layer_grad_norms: Vec<f64>,
    pub signals: Option<Vec<LayerSignals>>,
}

impl GradientReport {
    pub fn new(weight_grads: Vec<Array2<f64>>, signals: Option<Vec<LayerSignals>>) -> Self {
        let layer_grad_norms = weight_grads.iter().map(mean_norm).collect();
        Self { weight_grads, layer_grad_norms, signals }
    }

    pub fn zeros_for(net: &Network) -> Self {
        Self::new(net.layers().iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(), None)
    }

    pub fn is_finite(&self) -> bool {
        self.weight_grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Elementwise sum; batch gradients are accumulated in a fixed order with this.
    pub fn accumulate(&mut self, other: &GradientReport) {
        for (a, b) in self.weight_grads.iter_mut().zip(&other.weight_grads) {
            *a += b;
        }
        self.layer_grad_norms = self.weight_grads.iter().map(mean_norm).collect();
        self.signals = None;
    }

    /// `max |a - b| / max |b|` over all layers, 0 when both are zero.
    pub fn max_rel_deviation(&self, reference: &GradientReport) -> f64 {
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for (a, b) in self.weight_grads.iter().zip(&reference.weight_grads) {
            for (x, y) in a.iter().zip(b.iter()) {
                diff = diff.max((x - y).abs());
                scale = scale.max(y.abs());
            }
        }
        if diff == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }
}

/// Layer gradient magnitude: `||G||_F / sqrt(#entries)`.
pub fn mean_norm(g: &Array2<f64>) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt()
}

pub(crate) fn check_trace(net: &Network, trace: &NetworkTrace, loss_grad: &LossGrad) -> Result<()> {
    if trace.layers.len() != net.depth() {
        return Err(Error::Shape(format!(
            "trace has {} layers, network has {}",
            trace.layers.len(),
            net.depth()
        )));
    }
    for (layer, tr) in net.layers().iter().zip(&trace.layers) {
        if tr.z.nrows() != layer.outputs() || tr.a_in.nrows() != layer.inputs() {
            return Err(Error::Shape("trace does not match network widths".into()));
        }
    }
    let expected = (net.outputs(), trace.steps());
    if loss_grad.values.dim() != expected {
        return Err(Error::Shape(format!(
            "loss gradient is {:?}, expected {:?}",
            loss_grad.values.dim(),
            expected
        )));
    }
    Ok(())
}

/// `dL/ds` of the last layer from a loss gradient of either kind.
pub(crate) fn output_spike_grad(net: &Network, loss_grad: &LossGrad) -> Array2<f64> {
    match loss_grad.kind {
        LossGradKind::FilteredOutput => net.last().kernels.filter_adjoint(loss_grad.values.view()),
        LossGradKind::RawSpikes => loss_grad.values.clone(),
    }
}

/// Shared layer-wise driver for the vectorized engines. `dz` maps
/// `dL/ds` of a layer to `dL/dz`; everything else is common.
pub(crate) fn backward_vectorized<F>(
    net: &Network,
    trace: &NetworkTrace,
    loss_grad: &LossGrad,
    keep_signals: bool,
    dz: F,
) -> Result<GradientReport>
where
    F: Fn(&DenseLayer, &LayerTrace, &Array2<f64>) -> Array2<f64>,
{
    check_trace(net, trace, loss_grad)?;
    let depth = net.depth();
    let mut grads = vec![Array2::zeros((0, 0)); depth];
    let mut signals = Vec::with_capacity(if keep_signals { depth } else { 0 });
    let mut g_s = output_spike_grad(net, loss_grad);
    for l in (0..depth).rev() {
        let layer = &net.layers()[l];
        let tr = &trace.layers[l];
        let d = dz(layer, tr, &g_s);
        grads[l] = d.dot(&tr.a_in.t());
        let e_in = layer.weights.t().dot(&d);
        if l > 0 {
            g_s = layer.kernels.filter_adjoint(e_in.view());
        }
        if keep_signals {
            signals.push(LayerSignals { d, e_in });
        }
    }
    signals.reverse();
    Ok(GradientReport::new(grads, keep_signals.then_some(signals)))
}
