//! Fitting a target spike train from Poisson input.
//!
//! CSV columns: `engine,seed,epoch,loss`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{csv_table, poisson_spikes, random_spike_times, ExperimentConfig, RunOutput};
use crate::error::{Error, Result};
use crate::forward::Network;
use crate::grad::Engine;
use crate::train::{train_loop, LossFn, LossKind, Sample, Target, TrainConfig};

pub const POISSON_COLUMNS: &[&str] = &["engine", "seed", "epoch", "loss"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub engine: Engine,
    pub seed: u64,
    pub epoch: usize,
    pub loss: f64,
}

/// Initial network and the single training sample for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonTask {
    pub net: Network,
    pub sample: Sample,
}

pub fn poisson_task(cfg: &ExperimentConfig, seed: u64) -> Result<PoissonTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = &cfg.network.widths;
    let input = poisson_spikes(widths[0], cfg.steps, cfg.input_rate_hz, cfg.dt, &mut rng)?;
    let target = random_spike_times(widths[widths.len() - 1], cfg.steps, cfg.target_spikes, cfg.dt, &mut rng)?;
    let net = cfg.network.build(cfg.dt, &mut rng)?;
    let target = cfg.readout.select_target(&net, target.bits());
    Ok(PoissonTask { net, sample: Sample { input, target: Target::Signal(target) } })
}

pub fn run_poisson_fit(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.loss != LossKind::Mse {
        return Err(Error::Config("poisson_fit uses the mse loss".into()));
    }
    let objective = LossFn { kind: LossKind::Mse, readout: cfg.readout };
    let jobs: Vec<(Engine, u64)> =
        cfg.engines.iter().flat_map(|&e| cfg.seeds().map(move |s| (e, s))).collect();
    let histories = jobs
        .par_iter()
        .map(|&(engine, seed)| {
            let PoissonTask { mut net, sample } = poisson_task(cfg, seed)?;
            let train = TrainConfig {
                engine,
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                adam: cfg.optimizer,
                seed,
            };
            train_loop(&mut net, std::slice::from_ref(&sample), &train, &objective, |_| {})
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut per_engine = serde_json::Map::new();
    for &engine in &cfg.engines {
        let mut summed = Vec::new();
        let mut last = Vec::new();
        let mut skipped = 0;
        for (&(e, seed), hist) in jobs.iter().zip(&histories) {
            if e != engine {
                continue;
            }
            rows.extend(hist.iter().map(|r| LossRow { engine, seed, epoch: r.epoch, loss: r.loss }));
            summed.push(hist.iter().map(|r| r.loss).sum::<f64>());
            last.push(hist.last().map_or(f64::NAN, |r| r.loss));
            skipped += hist.iter().map(|r| r.skipped_steps).sum::<usize>();
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        per_engine.insert(
            engine.name().into(),
            json!({
                "mean_summed_loss": mean(&summed),
                "summed_loss_per_seed": summed,
                "mean_final_loss": mean(&last),
                "skipped_steps": skipped,
            }),
        );
    }
    Ok(RunOutput {
        csv: csv_table(POISSON_COLUMNS, &rows)?,
        metrics: json!({ "engines": per_engine }),
        passed: true,
    })
}
