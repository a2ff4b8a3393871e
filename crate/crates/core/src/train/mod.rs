//! Losses, the Adam optimizer and the training loop.

mod adam;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{ce_max_over_time, ce_sum_over_time, mse_loss, LossGrad, LossGradKind};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{forward_network, Mode, Network, NetworkTrace, SpikeTrain};
use crate::grad::{Engine, GradientReport};

/// Which network output a loss sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// `epsilon ∗ s` of the last layer.
    Filtered,
    /// The last layer's spikes.
    Spikes,
}

impl Readout {
    pub fn grad_kind(self) -> LossGradKind {
        match self {
            Readout::Filtered => LossGradKind::FilteredOutput,
            Readout::Spikes => LossGradKind::RawSpikes,
        }
    }

    pub fn select(self, trace: &NetworkTrace) -> &Array2<f64> {
        match self {
            Readout::Filtered => &trace.output,
            Readout::Spikes => trace.output_spikes(),
        }
    }

    /// Target spikes mapped into the space this readout compares in.
    pub fn select_target(self, net: &Network, spikes: &Array2<f64>) -> Array2<f64> {
        match self {
            Readout::Filtered => net.last().kernels.filter(spikes.view()),
            Readout::Spikes => spikes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Signal(Array2<f64>),
    Label(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: SpikeTrain,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CeSumOverTime,
    CeMaxOverTime,
}

/// Anything that scores a forward trace against a target.
pub trait Objective: Sync {
    fn readout(&self) -> Readout;
    fn evaluate(&self, trace: &NetworkTrace, target: &Target) -> Result<(f64, LossGrad)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFn {
    pub kind: LossKind,
    pub readout: Readout,
}

impl Objective for LossFn {
    fn readout(&self) -> Readout {
        self.readout
    }

    fn evaluate(&self, trace: &NetworkTrace, target: &Target) -> Result<(f64, LossGrad)> {
        let out = self.readout.select(trace);
        let (loss, grad) = match (self.kind, target) {
            (LossKind::Mse, Target::Signal(t)) => mse_loss(out, t)?,
            (LossKind::CeSumOverTime, Target::Label(c)) => ce_sum_over_time(out, *c)?,
            (LossKind::CeMaxOverTime, Target::Label(c)) => ce_max_over_time(out, *c)?,
            (kind, _) => return Err(Error::Config(format!("target type does not fit loss {kind:?}"))),
        };
        Ok((loss, LossGrad { kind: self.readout.grad_kind(), values: grad.values }))
    }
}

/// Rejects a loss gradient whose kind does not match the readout it was
/// supposed to be taken against.
pub fn check_loss_kind(readout: Readout, grad: &LossGrad) -> Result<()> {
    let expected = readout.grad_kind();
    if grad.kind != expected {
        return Err(Error::LossKind { got: grad.kind, expected });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub engine: Engine,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch sample order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { engine: Engine::Exodus, epochs: 1, batch_size: 1, adam: AdamConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean sample loss, measured on the forward pass before each update.
    pub loss: f64,
    /// Per-layer gradient norm, averaged over the epoch's steps.
    pub grad_norms: Vec<f64>,
    /// Steps skipped because the gradient was not finite.
    pub skipped_steps: usize,
}

/// Forward and backward for a batch. Samples may run on several threads; the
/// gradient sum is always taken in sample order.
pub fn batch_gradient(
    net: &Network,
    batch: &[&Sample],
    engine: Engine,
    objective: &dyn Objective,
) -> Result<(Vec<f64>, GradientReport)> {
    let results: Vec<(f64, GradientReport)> = batch
        .par_iter()
        .map(|sample| {
            let trace = forward_network(net, &sample.input, Mode::Hard)?;
            let (loss, grad) = objective.evaluate(&trace, &sample.target)?;
            check_loss_kind(objective.readout(), &grad)?;
            Ok((loss, engine.backward(net, &trace, &grad)?))
        })
        .collect::<Result<_>>()?;
    let mut total = GradientReport::zeros_for(net);
    let mut losses = Vec::with_capacity(results.len());
    for (loss, report) in &results {
        total.accumulate(report);
        losses.push(*loss);
    }
    Ok((losses, total))
}

pub fn train_loop<F>(
    net: &mut Network,
    data: &[Sample],
    cfg: &TrainConfig,
    objective: &dyn Objective,
    mut log: F,
) -> Result<Vec<EpochRecord>>
where
    F: FnMut(&EpochRecord),
{
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if data.is_empty() && cfg.epochs > 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam, &net.weights());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = vec![0.0; net.depth()];
        let mut steps = 0usize;
        let mut skipped = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (losses, grads) = batch_gradient(net, &batch, cfg.engine, objective)?;
            loss_sum += losses.iter().sum::<f64>();
            for (acc, n) in norm_sum.iter_mut().zip(&grads.layer_grad_norms) {
                *acc += n;
            }
            steps += 1;
            match adam_step(&mut adam, &grads, net.layers_mut().iter_mut().map(|l| &mut l.weights)) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            grad_norms: norm_sum.iter().map(|s| s / steps as f64).collect(),
            skipped_steps: skipped,
        };
        log(&record);
        history.push(record);
    }
    Ok(history)
}
