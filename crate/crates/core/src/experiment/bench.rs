//! Wall-clock time of forward plus backward per engine across sequence lengths.
//!
//! CSV columns: `engine,steps,median_s,min_s,max_s,repeats`. Runs on a single
//! worker thread so timings are comparable between engines.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{csv_table, poisson_spikes, random_spike_times, ExperimentConfig, RunOutput};
use crate::error::{Error, Result};
use crate::forward::{forward_network, Mode};
use crate::grad::Engine;
use crate::train::{LossFn, LossKind, Objective, Target};

pub const BENCH_COLUMNS: &[&str] = &["engine", "steps", "median_s", "min_s", "max_s", "repeats"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub engine: Engine,
    pub steps: usize,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub repeats: usize,
}

pub fn run_bench(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let rows = pool.install(|| bench_rows(cfg))?;

    let largest = cfg.bench.steps.iter().copied().max().unwrap_or(0);
    let median_at = |engine: Engine| {
        rows.iter().find(|r| r.engine == engine && r.steps == largest).map(|r| r.median_s)
    };
    let exodus_le_bptt = match (median_at(Engine::Exodus), median_at(Engine::Bptt)) {
        (Some(e), Some(b)) => json!(e <= b),
        _ => serde_json::Value::Null,
    };
    Ok(RunOutput {
        csv: csv_table(BENCH_COLUMNS, &rows)?,
        metrics: json!({ "largest_steps": largest, "exodus_le_bptt_at_largest": exodus_le_bptt }),
        passed: true,
    })
}

fn bench_rows(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let objective = LossFn { kind: LossKind::Mse, readout: cfg.readout };
    let widths = &cfg.network.widths;
    let mut rows = Vec::new();
    for &steps in &cfg.bench.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let input = poisson_spikes(widths[0], steps, cfg.input_rate_hz, cfg.dt, &mut rng)?;
        let spikes = random_spike_times(widths[widths.len() - 1], steps, cfg.target_spikes.min(steps), cfg.dt, &mut rng)?;
        let net = cfg.network.build(cfg.dt, &mut rng)?;
        let target = Target::Signal(cfg.readout.select_target(&net, spikes.bits()));
        for &engine in &cfg.engines {
            let once = || -> Result<f64> {
                let start = Instant::now();
                let trace = forward_network(&net, &input, Mode::Hard)?;
                let (_, grad) = objective.evaluate(&trace, &target)?;
                std::hint::black_box(engine.backward(&net, &trace, &grad)?);
                Ok(start.elapsed().as_secs_f64())
            };
            for _ in 0..cfg.bench.warmup {
                once()?;
            }
            let mut times = (0..cfg.bench.repeats).map(|_| once()).collect::<Result<Vec<_>>>()?;
            times.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                engine,
                steps,
                median_s: times[times.len() / 2],
                min_s: times[0],
                max_s: times[times.len() - 1],
                repeats: times.len(),
            });
        }
    }
    Ok(rows)
}
