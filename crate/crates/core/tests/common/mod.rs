#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use spikegrad::forward::{forward_network, DenseLayer, Mode, Network, NetworkTrace, SpikeTrain};
use spikegrad::neuron::{LifParams, SrmKernels, SurrogateFamily, SurrogateSpec};
use spikegrad::signal::CausalKernel;
use spikegrad::train::{LossGrad, LossGradKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Lif,
    If,
    Fir,
}

pub const KERNEL_KINDS: [KernelKind; 3] = [KernelKind::Lif, KernelKind::If, KernelKind::Fir];

#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub widths: Vec<usize>,
    pub steps: usize,
    pub kernel: KernelKind,
    pub family: SurrogateFamily,
    pub scale: f64,
    pub kind: LossGradKind,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub spec: CaseSpec,
    pub net: Network,
    pub input: SpikeTrain,
    pub trace: NetworkTrace,
    pub loss_grad: LossGrad,
}

pub fn kernels<R: Rng>(kind: KernelKind, theta: f64, rng: &mut R) -> SrmKernels {
    match kind {
        KernelKind::Lif => SrmKernels::lif(LifParams::from_alpha(rng.random_range(0.3..0.98), theta, 1e-3).unwrap()),
        KernelKind::If => SrmKernels::lif(LifParams::integrate_and_fire(1e-3, theta).unwrap()),
        KernelKind::Fir => {
            let eps: Vec<f64> = (0..rng.random_range(1..7)).map(|_| rng.random_range(0.0..1.0)).collect();
            let nu: Vec<f64> = (0..rng.random_range(1..7)).map(|_| -rng.random_range(0.0..1.2 * theta)).collect();
            SrmKernels::fir(CausalKernel::new(eps).unwrap(), CausalKernel::new(nu).unwrap())
        }
    }
}

/// A random network driven hard enough that most layers spike, its forward
/// trace and a random loss gradient of the requested kind.
pub fn build_case<R: Rng>(spec: CaseSpec, rng: &mut R) -> Case {
    let theta = rng.random_range(0.5..1.5);
    let mut layers = Vec::new();
    for w in spec.widths.windows(2) {
        let k = kernels(spec.kernel, theta, rng);
        let width = rng.random_range(0.3..1.0);
        let sg = SurrogateSpec::new(spec.family, width, theta, spec.scale).unwrap();
        let gain = rng.random_range(0.5..2.0);
        let weights = Array2::from_shape_simple_fn((w[1], w[0]), || gain * rng.random_range(-0.6..1.0));
        layers.push(DenseLayer::new(weights, k, sg).unwrap());
    }
    let net = Network::new(layers).unwrap();
    let rate = rng.random_range(0.1..0.5);
    let bits = Array2::from_shape_simple_fn((spec.widths[0], spec.steps), || {
        if rng.random::<f64>() < rate {
            1.0
        } else {
            0.0
        }
    });
    let input = SpikeTrain::new(bits, 1e-3).unwrap();
    let trace = forward_network(&net, &input, spec.mode).unwrap();
    let values = Array2::from_shape_simple_fn((net.outputs(), spec.steps), || rng.random_range(-1.0..1.0));
    let loss_grad = LossGrad { kind: spec.kind, values };
    Case { spec, net, input, trace, loss_grad }
}

pub fn random_spec<R: Rng>(rng: &mut R, max_layers: usize, max_width: usize, max_steps: usize) -> CaseSpec {
    let depth = rng.random_range(1..=max_layers);
    let widths = (0..=depth).map(|_| rng.random_range(1..=max_width)).collect();
    CaseSpec {
        widths,
        steps: rng.random_range(1..=max_steps),
        kernel: KERNEL_KINDS[rng.random_range(0..3)],
        family: SurrogateFamily::ALL[rng.random_range(0..SurrogateFamily::ALL.len())],
        scale: [0.1, 1.0, 10.0][rng.random_range(0..3)],
        kind: if rng.random::<bool>() { LossGradKind::FilteredOutput } else { LossGradKind::RawSpikes },
        mode: Mode::Hard,
    }
}

/// `max |a - b| / max |b|` over two sets of matrices; 0 when they agree exactly.
pub fn rel_dev(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.dim(), y.dim());
        for (p, q) in x.iter().zip(y.iter()) {
            diff = diff.max((p - q).abs());
            scale = scale.max(q.abs());
        }
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn spike_count(trace: &NetworkTrace) -> f64 {
    trace.layers.iter().map(|l| l.s.sum()).sum()
}

/// Random soft-mode case with sigmoid surrogates at scale 1 and at most
/// `max_weights` weights, for comparison with finite differences.
pub fn soft_case<R: Rng>(rng: &mut R, max_steps: usize, max_weights: usize) -> Case {
    loop {
        let mut spec = random_spec(rng, 3, 8, max_steps);
        spec.family = SurrogateFamily::SigmoidDerivative;
        spec.scale = 1.0;
        spec.mode = Mode::Soft;
        let weights: usize = spec.widths.windows(2).map(|w| w[0] * w[1]).sum();
        if weights <= max_weights {
            return build_case(spec, rng);
        }
    }
}

/// `Σ g ⊙ y` where `y` is the readout matching the gradient kind, so that
/// `dL/dy = g` exactly.
pub fn linear_loss(trace: &NetworkTrace, g: &LossGrad) -> f64 {
    let y = match g.kind {
        LossGradKind::FilteredOutput => &trace.output,
        LossGradKind::RawSpikes => trace.output_spikes(),
    };
    (y * &g.values).sum()
}
