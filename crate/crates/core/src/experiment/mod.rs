//! Experiment configuration and runners behind the command line tool.
//!
//! Every run takes an [`ExperimentConfig`] and returns a [`RunOutput`]: one
//! CSV table plus a JSON summary. Column orders are fixed per
//! [`CSV_SCHEMA_VERSION`] and listed next to each runner.

mod bench;
mod grad_compare;
mod ift_check;
mod poisson;

pub use bench::{run_bench, BenchRow, BENCH_COLUMNS};
pub use grad_compare::{run_grad_compare, GradNormRow, GRAD_COMPARE_COLUMNS};
pub use ift_check::{run_ift_check, IftCheckRow, IFT_CHECK_COLUMNS};
pub use poisson::{poisson_task, run_poisson_fit, LossRow, PoissonTask, POISSON_COLUMNS};

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{Network, SpikeTrain};
use crate::grad::Engine;
use crate::neuron::{LifParams, SrmKernels, SurrogateFamily, SurrogateSpec};
use crate::signal::CausalKernel;
use crate::train::{AdamConfig, LossKind, Readout};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PoissonFit,
    GradCompare,
    Bench,
    IftCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PoissonFit => "poisson_fit",
            ExperimentKind::GradCompare => "grad_compare",
            ExperimentKind::Bench => "bench",
            ExperimentKind::IftCheck => "ift_check",
        }
    }
}

/// Neuron model shared by every layer. Time constants are in the same unit as `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeuronSpec {
    Lif { tau: f64, theta: f64 },
    If { theta: f64 },
    Fir { epsilon: Vec<f64>, nu: Vec<f64>, theta: f64 },
}

impl NeuronSpec {
    pub fn theta(&self) -> f64 {
        match self {
            NeuronSpec::Lif { theta, .. } | NeuronSpec::If { theta } | NeuronSpec::Fir { theta, .. } => *theta,
        }
    }

    pub fn kernels(&self, dt: f64) -> Result<SrmKernels> {
        Ok(match self {
            NeuronSpec::Lif { tau, theta } => SrmKernels::lif(LifParams::new(*tau, dt, *theta)?),
            NeuronSpec::If { theta } => SrmKernels::lif(LifParams::integrate_and_fire(dt, *theta)?),
            NeuronSpec::Fir { epsilon, nu, .. } => {
                SrmKernels::fir(CausalKernel::new(epsilon.clone())?, CausalKernel::new(nu.clone())?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub family: SurrogateFamily,
    pub width: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `[inputs, layer 1, ..., layer L]`.
    pub widths: Vec<usize>,
    pub neuron: NeuronSpec,
    pub surrogate: SurrogateConfig,
}

impl NetworkSpec {
    pub fn surrogate_spec(&self) -> Result<SurrogateSpec> {
        let s = self.surrogate;
        SurrogateSpec::new(s.family, s.width, self.neuron.theta(), s.scale)
    }

    pub fn build<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<Network> {
        let kernels = self.neuron.kernels(dt)?;
        let surrogate = self.surrogate_spec()?;
        Network::init(&self.widths, rng, |_| (kernels.clone(), surrogate))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IftCheckConfig {
    /// Random layer instances for the Jacobian checks.
    pub instances: usize,
    pub max_neurons: usize,
    pub max_steps: usize,
    /// Random surrogate sequences for the reset-product checks.
    pub chi_sequences: usize,
    pub chi_max_steps: usize,
    pub mu: f64,
    /// Flip the sign of the reset kernel inside the dense Jacobian only.
    pub inject_fault: bool,
}

impl Default for IftCheckConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            max_neurons: 4,
            max_steps: 64,
            chi_sequences: 30,
            chi_max_steps: 256,
            mu: 0.5,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub steps: Vec<usize>,
    pub warmup: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { steps: vec![128, 512, 2048], warmup: 2, repeats: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub engines: Vec<Engine>,
    pub seed: u64,
    /// Independent repetitions with seeds `seed, seed+1, ...`.
    pub runs: usize,
    pub network: NetworkSpec,
    pub steps: usize,
    pub dt: f64,
    pub loss: LossKind,
    pub readout: Readout,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Poisson input rate per channel in events per unit time (Hz when `dt`
    /// is in seconds); the per-step spike probability is `rate · dt`.
    pub input_rate_hz: f64,
    /// Target spikes per output neuron.
    pub target_spikes: usize,
    /// Surrogate scales for gradient comparisons.
    pub scales: Vec<f64>,
    pub bench: BenchConfig,
    pub ift: IftCheckConfig,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults(ExperimentKind::PoissonFit)
    }
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            engines: vec![Engine::Exodus, Engine::Slayer],
            seed: 0,
            runs: 5,
            network: NetworkSpec {
                widths: vec![250, 25, 1],
                neuron: NeuronSpec::Lif { tau: 0.02, theta: 1.0 },
                surrogate: SurrogateConfig { family: SurrogateFamily::Exponential, width: 0.5, scale: 1.0 },
            },
            steps: 200,
            dt: 1e-3,
            loss: LossKind::Mse,
            readout: Readout::Filtered,
            optimizer: AdamConfig::default(),
            epochs: 3000,
            batch_size: 1,
            input_rate_hz: 10.0,
            target_spikes: 4,
            scales: vec![1.0],
            bench: BenchConfig::default(),
            ift: IftCheckConfig::default(),
            out: None,
        };
        match kind {
            ExperimentKind::PoissonFit => base,
            ExperimentKind::GradCompare => Self {
                engines: Engine::ALL.to_vec(),
                network: NetworkSpec {
                    widths: vec![100, 50, 50, 50, 10],
                    neuron: NeuronSpec::If { theta: 1.0 },
                    ..base.network.clone()
                },
                steps: 100,
                input_rate_hz: 100.0,
                scales: vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
                ..base
            },
            ExperimentKind::Bench => Self {
                engines: Engine::ALL.to_vec(),
                runs: 1,
                network: NetworkSpec { widths: vec![100, 100, 10], ..base.network.clone() },
                input_rate_hz: 50.0,
                ..base
            },
            ExperimentKind::IftCheck => Self { engines: vec![Engine::Exodus], runs: 1, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let w = &self.network.widths;
        if w.len() < 2 {
            return bad(format!("network needs an input width and at least one layer, got widths {w:?}"));
        }
        if w.contains(&0) {
            return bad(format!("layer widths must be positive, got {w:?}"));
        }
        if self.engines.is_empty() {
            return bad("no engine selected".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        let p = self.input_rate_hz * self.dt;
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("input rate {} at dt {} is not a per-step probability", self.input_rate_hz, self.dt));
        }
        if self.target_spikes > self.steps {
            return bad(format!("{} target spikes do not fit in {} steps", self.target_spikes, self.steps));
        }
        if self.scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad(format!("scales must be finite and >= 0, got {:?}", self.scales));
        }
        if !(self.optimizer.lr >= 0.0 && self.optimizer.lr.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.optimizer.lr));
        }
        self.network.neuron.kernels(self.dt).map_err(|e| Error::Config(e.to_string()))?;
        self.network.surrogate_spec().map_err(|e| Error::Config(e.to_string()))?;
        match self.experiment {
            ExperimentKind::GradCompare if self.scales.is_empty() => bad("grad_compare needs at least one scale".into()),
            ExperimentKind::Bench if self.bench.steps.is_empty() || self.bench.repeats == 0 => {
                bad("bench needs at least one step count and one repeat".into())
            }
            ExperimentKind::IftCheck => {
                let c = &self.ift;
                if c.max_neurons == 0 || c.max_steps == 0 || c.chi_max_steps < 2 {
                    return bad("ift_check sizes must be positive (chi sequences need 2 steps)".into());
                }
                if c.max_neurons * c.max_steps > crate::oracle::DENSE_CAP {
                    return bad(format!(
                        "ift_check instances up to {}x{} exceed the dense cap {}",
                        c.max_neurons,
                        c.max_steps,
                        crate::oracle::DENSE_CAP
                    ));
                }
                if !(c.mu > 0.0 && c.mu <= 1.0) {
                    return bad(format!("mu must lie in (0, 1], got {}", c.mu));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(move |k| self.seed.wrapping_add(k))
    }

    /// Short content hash of the configuration, used to name runs.
    pub fn run_id(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(hex::encode(&digest[..6]))
    }
}

/// Bernoulli spike train with per-step probability `rate · dt`.
pub fn poisson_spikes<R: Rng + ?Sized>(channels: usize, steps: usize, rate: f64, dt: f64, rng: &mut R) -> Result<SpikeTrain> {
    let dist = Bernoulli::new(rate * dt).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let bits = ndarray::Array2::from_shape_simple_fn((channels, steps), || if dist.sample(rng) { 1.0 } else { 0.0 });
    SpikeTrain::new(bits, dt)
}

/// `count` spikes per channel at distinct random steps.
pub fn random_spike_times<R: Rng + ?Sized>(channels: usize, steps: usize, count: usize, dt: f64, rng: &mut R) -> Result<SpikeTrain> {
    let mut bits = ndarray::Array2::zeros((channels, steps));
    for c in 0..channels {
        for t in rand::seq::index::sample(rng, steps, count.min(steps)) {
            bits[[c, t]] = 1.0;
        }
    }
    SpikeTrain::new(bits, dt)
}

/// Result of one experiment: a CSV table and summary metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub metrics: serde_json::Value,
    /// False when a check failed; only ift_check can fail.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub passed: bool,
    pub metrics: serde_json::Value,
    pub config: ExperimentConfig,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::PoissonFit => run_poisson_fit(cfg),
        ExperimentKind::GradCompare => run_grad_compare(cfg),
        ExperimentKind::Bench => run_bench(cfg),
        ExperimentKind::IftCheck => run_ift_check(cfg),
    }
}

/// Writes `<experiment>.csv` and `summary.json` into `dir`; returns the summary.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, output: &RunOutput) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.csv", cfg.experiment.name())), &output.csv)?;
    let summary = Summary {
        run_id: cfg.run_id()?,
        schema_version: CSV_SCHEMA_VERSION,
        experiment: cfg.experiment,
        passed: output.passed,
        metrics: output.metrics.clone(),
        config: cfg.clone(),
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// CSV text with a fixed header, written even when there are no rows.
pub(crate) fn csv_table<T: Serialize>(columns: &[&str], rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(columns)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
