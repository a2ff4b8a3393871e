//! Forward simulation of feed-forward spiking networks.
//!
//! Per layer, with `epsilon` and `nu` the layer's kernels:
//!
//! ```text
//! a_in[n] = (epsilon ∗ s_in)[n]
//! z[n]    = W · a_in[n]
//! u[n]    = z[n] + (nu ∗ s)[n-1]
//! s[n]    = f_s(u[n])
//! ```
//!
//! The network output is the last layer's spikes filtered by its own
//! `epsilon`. Every signal is recorded so the backward engines can run
//! without recomputation.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neuron::{soft_spike_fn, spike_fn, surrogate_value, SrmKernels, SurrogateSpec};
use crate::signal;

/// Binary spike matrix, `neurons × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    bits: Array2<f64>,
    dt: f64,
}

impl SpikeTrain {
    pub fn new(bits: Array2<f64>, dt: f64) -> Result<Self> {
        if bits.ncols() == 0 {
            return Err(Error::Shape("spike train needs T >= 1".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
        }
        if bits.iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(Error::InvalidParam("spike trains hold only 0 and 1".into()));
        }
        Ok(Self { bits, dt })
    }

    pub fn zeros(neurons: usize, steps: usize, dt: f64) -> Result<Self> {
        Self::new(Array2::zeros((neurons, steps)), dt)
    }

    pub fn bits(&self) -> &Array2<f64> {
        &self.bits
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn neurons(&self) -> usize {
        self.bits.nrows()
    }

    pub fn steps(&self) -> usize {
        self.bits.ncols()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1.0).count()
    }
}

/// Hard mode uses the binary step; soft mode replaces it with the logistic
/// whose derivative is the sigmoid surrogate, giving a differentiable forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hard,
    Soft,
}

/// Fully connected spiking layer. `weights` is `N_out × N_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub kernels: SrmKernels,
    pub surrogate: SurrogateSpec,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, kernels: SrmKernels, surrogate: SurrogateSpec) -> Result<Self> {
        let layer = Self { weights, kernels, surrogate };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if self.weights.is_empty() {
            return Err(Error::Shape("layer has no weights".into()));
        }
        self.surrogate.validate()?;
        if let Some(p) = self.kernels.lif_params() {
            if p.theta() != self.surrogate.theta {
                return Err(Error::InvalidParam(format!(
                    "LIF reset threshold {} differs from firing threshold {}",
                    p.theta(),
                    self.surrogate.theta
                )));
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn theta(&self) -> f64 {
        self.surrogate.theta
    }

    /// Uniform `[-b, b]` initialization with `b = sqrt(1 / N_in)`.
    pub fn init_weights<R: Rng + ?Sized>(n_out: usize, n_in: usize, rng: &mut R) -> Array2<f64> {
        let b = (1.0 / n_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-b, b).expect("finite bound");
        Array2::from_shape_simple_fn((n_out, n_in), || dist.sample(rng))
    }
}

/// Signals of one layer over the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Filtered input, `N_in × T`.
    pub a_in: Array2<f64>,
    pub z: Array2<f64>,
    pub u: Array2<f64>,
    /// Output spikes, exactly 0/1 in hard mode, in `[0, 1]` in soft mode.
    pub s: Array2<f64>,
}

impl LayerTrace {
    pub fn steps(&self) -> usize {
        self.u.ncols()
    }

    pub fn neurons(&self) -> usize {
        self.u.nrows()
    }

    /// Surrogate derivative at every recorded membrane potential.
    pub fn surrogate_grads(&self, spec: &SurrogateSpec) -> Array2<f64> {
        self.u.mapv(|u| surrogate_value(spec, u))
    }
}

/// Ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} channels but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random initialization for `widths = [N_0, N_1, ..., N_L]`; `spec(l)`
    /// supplies the kernels and surrogate of layer `l` (0-based).
    pub fn init<R, F>(widths: &[usize], rng: &mut R, mut spec: F) -> Result<Self>
    where
        R: Rng + ?Sized,
        F: FnMut(usize) -> (SrmKernels, SurrogateSpec),
    {
        if widths.len() < 2 {
            return Err(Error::Shape("need an input width and at least one layer".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (kernels, surrogate) = spec(l);
                DenseLayer::new(DenseLayer::init_weights(w[1], w[0], rng), kernels, surrogate)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn weights(&self) -> Vec<Array2<f64>> {
        self.layers.iter().map(|l| l.weights.clone()).collect()
    }

    pub fn last(&self) -> &DenseLayer {
        &self.layers[self.layers.len() - 1]
    }
}

/// All layer traces of one forward run.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrace {
    pub layers: Vec<LayerTrace>,
    pub input: Array2<f64>,
    /// Last layer's spikes filtered with its `epsilon`, `N_L × T`.
    pub output: Array2<f64>,
    pub mode: Mode,
}

impl NetworkTrace {
    pub fn output_spikes(&self) -> &Array2<f64> {
        &self.layers[self.layers.len() - 1].s
    }

    pub fn steps(&self) -> usize {
        self.input.ncols()
    }
}

pub fn forward_layer(layer: &DenseLayer, s_in: &SpikeTrain, mode: Mode) -> Result<LayerTrace> {
    forward_layer_view(layer, s_in.bits().view(), mode)
}

pub(crate) fn forward_layer_view(
    layer: &DenseLayer,
    s_in: ArrayView2<'_, f64>,
    mode: Mode,
) -> Result<LayerTrace> {
    check_input(layer, s_in)?;
    let spike = spike_rule(layer, mode)?;
    let a_in = layer.kernels.filter(s_in);
    let z = layer.weights.dot(&a_in);
    let (n, t) = z.dim();
    let mut u = Array2::zeros((n, t));
    let mut s = Array2::zeros((n, t));

    match &layer.kernels {
        SrmKernels::Lif(p) => {
            // u[n] = alpha·u[n-1] + (W s_in)[n] - theta·s[n-1]
            let drive = layer.weights.dot(&s_in);
            let (alpha, theta) = (p.alpha(), p.theta());
            let mut prev_u = Array1::<f64>::zeros(n);
            let mut prev_s = Array1::<f64>::zeros(n);
            for step in 0..t {
                for i in 0..n {
                    let v = alpha * prev_u[i] + drive[[i, step]] - theta * prev_s[i];
                    let sp = spike(v);
                    u[[i, step]] = v;
                    s[[i, step]] = sp;
                    prev_u[i] = v;
                    prev_s[i] = sp;
                }
            }
        }
        SrmKernels::Fir { nu, .. } => {
            for step in 0..t {
                for i in 0..n {
                    let mut reset = 0.0;
                    for (j, &w) in nu.taps().iter().enumerate() {
                        if j + 1 > step {
                            break;
                        }
                        reset += w * s[[i, step - 1 - j]];
                    }
                    let v = z[[i, step]] + reset;
                    u[[i, step]] = v;
                    s[[i, step]] = spike(v);
                }
            }
        }
    }
    Ok(LayerTrace { a_in, z, u, s })
}

/// Forward pass written directly in convolutional form with materialized
/// kernels, O(T²) for LIF. Used to cross-check the recurrent fast path.
pub fn forward_layer_reference(layer: &DenseLayer, s_in: &SpikeTrain, mode: Mode) -> Result<LayerTrace> {
    let s_in = s_in.bits().view();
    check_input(layer, s_in)?;
    let spike = spike_rule(layer, mode)?;
    let t = s_in.ncols();
    let eps = layer.kernels.epsilon(t);
    let nu = layer.kernels.nu(t);
    let a_in = signal::conv_rows(&eps, s_in);
    let z = layer.weights.dot(&a_in);
    let n = z.nrows();
    let mut u = Array2::zeros((n, t));
    let mut s = Array2::zeros((n, t));
    for step in 0..t {
        // (nu ∗ s)[step-1] only reads columns < step, which are final.
        let reset = signal::delayed_conv_rows(&nu, s.slice(ndarray::s![.., ..=step]));
        for i in 0..n {
            let v = z[[i, step]] + reset[[i, step]];
            u[[i, step]] = v;
            s[[i, step]] = spike(v);
        }
    }
    Ok(LayerTrace { a_in, z, u, s })
}

fn check_input(layer: &DenseLayer, s_in: ArrayView2<'_, f64>) -> Result<()> {
    if s_in.nrows() != layer.inputs() {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, got {}",
            layer.inputs(),
            s_in.nrows()
        )));
    }
    if s_in.ncols() == 0 {
        return Err(Error::Shape("input has no time steps".into()));
    }
    if layer.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    Ok(())
}

fn spike_rule(layer: &DenseLayer, mode: Mode) -> Result<impl Fn(f64) -> f64> {
    let spec = layer.surrogate;
    if mode == Mode::Soft {
        soft_spike_fn(&spec, 0.0)?;
    }
    Ok(move |u: f64| match mode {
        Mode::Hard => spike_fn(u, spec.theta),
        Mode::Soft => soft_spike_fn(&spec, u).expect("family checked above"),
    })
}

pub fn forward_network(net: &Network, input: &SpikeTrain, mode: Mode) -> Result<NetworkTrace> {
    forward_network_view(net, input.bits().view(), mode)
}

pub(crate) fn forward_network_view(
    net: &Network,
    input: ArrayView2<'_, f64>,
    mode: Mode,
) -> Result<NetworkTrace> {
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(net.depth());
    for layer in net.layers() {
        let trace = match layers.last() {
            None => forward_layer_view(layer, input, mode)?,
            Some(prev) => forward_layer_view(layer, prev.s.view(), mode)?,
        };
        layers.push(trace);
    }
    let output = net.last().kernels.filter(layers[layers.len() - 1].s.view());
    Ok(NetworkTrace { layers, input: input.to_owned(), output, mode })
}

/// Forward runs for a batch; results are returned in input order regardless
/// of how the work is split across threads.
pub fn forward_batch(net: &Network, inputs: &[SpikeTrain], mode: Mode) -> Result<Vec<NetworkTrace>> {
    inputs.par_iter().map(|x| forward_network(net, x, mode)).collect()
}

/// Residuals `u - z - (nu ∗ s)[n-1]` and `s - f_s(u)`, as max absolute values.
pub fn residuals(layer: &DenseLayer, trace: &LayerTrace, mode: Mode) -> Result<(f64, f64)> {
    let t = trace.steps();
    let reset = signal::delayed_conv_rows(&layer.kernels.nu(t), trace.s.view());
    let z_check = layer.weights.dot(&trace.a_in);
    let phi_u = (&trace.u - &trace.z - &reset)
        .iter()
        .chain((&trace.z - &z_check).iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let spike = spike_rule(layer, mode)?;
    let phi_s = trace
        .u
        .iter()
        .zip(trace.s.iter())
        .fold(0.0f64, |m, (&u, &s)| m.max((s - spike(u)).abs()));
    Ok((phi_u, phi_s))
}
