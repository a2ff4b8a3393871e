use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{forward_network, Mode, Network, NetworkTrace, SpikeTrain};
use crate::grad::GradientReport;
use crate::neuron::SurrogateFamily;

pub const FD_MAX_WEIGHTS: usize = 200;

/// Central-difference gradient of `loss(forward(net, input))` with respect to
/// every weight. The forward runs in soft mode, so every layer must use the
/// sigmoid surrogate at scale 1 for the result to be comparable with the
/// analytic engines.
pub fn finite_diff_grad<L>(net: &Network, input: &SpikeTrain, mode: Mode, loss: L, h: f64) -> Result<GradientReport>
where
    L: Fn(&NetworkTrace) -> Result<f64> + Sync,
{
    if mode != Mode::Soft {
        return Err(Error::Unsupported("finite differences need the soft forward".into()));
    }
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidParam(format!("step h = {h} outside [1e-7, 1e-3]")));
    }
    for layer in net.layers() {
        let sg = layer.surrogate;
        if sg.family != SurrogateFamily::SigmoidDerivative || sg.scale != 1.0 {
            return Err(Error::Unsupported(format!(
                "finite differences need sigmoid surrogates at scale 1, got {:?} at {}",
                sg.family, sg.scale
            )));
        }
    }
    let count = net.weight_count();
    if count > FD_MAX_WEIGHTS {
        return Err(Error::TooLarge { size: count, cap: FD_MAX_WEIGHTS });
    }

    let index: Vec<(usize, usize, usize)> = net
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            let (r, c) = layer.weights.dim();
            (0..r).flat_map(move |i| (0..c).map(move |j| (l, i, j)))
        })
        .collect();

    let eval = |net: &Network| -> Result<f64> { loss(&forward_network(net, input, Mode::Soft)?) };
    let values: Vec<f64> = index
        .par_iter()
        .map(|&(l, i, j)| {
            let mut probe = net.clone();
            let w0 = probe.layers()[l].weights[[i, j]];
            probe.layers_mut()[l].weights[[i, j]] = w0 + h;
            let up = eval(&probe)?;
            probe.layers_mut()[l].weights[[i, j]] = w0 - h;
            let down = eval(&probe)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect::<Result<_>>()?;

    let mut grads: Vec<Array2<f64>> = net.layers().iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect();
    for (&(l, i, j), v) in index.iter().zip(values) {
        grads[l][[i, j]] = v;
    }
    Ok(GradientReport::new(grads, None))
}
