//! End-to-end oracle checks on random small instances.
//!
//! CSV columns: `check,instance,value,tolerance,passed`. `value` is the
//! measured error for that check (for `determinant`, `|det(J_D) - 1|`).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{csv_table, poisson_spikes, ExperimentConfig, RunOutput};
use crate::error::Result;
use crate::forward::{forward_layer, DenseLayer, Mode};
use crate::grad::exodus::{sigma_lif_from_fprimes, sigma_from_fprimes};
use crate::neuron::{LifParams, SrmKernels, SurrogateFamily, SurrogateSpec};
use crate::oracle::chi::{chi_closed_form, chi_recursive, gamma_closed_form, gamma_recursive};
use crate::oracle::ift::{dense_from_sigma, ift_jacobians_from_fprimes, max_abs_diff, solve_ift_dense, solve_ift_lu};
use crate::oracle::{check_decay_bound, clamp_fprimes, DecayBoundParams, DENSE_CAP};
use crate::signal::CausalKernel;

pub const IFT_CHECK_COLUMNS: &[&str] = &["check", "instance", "value", "tolerance", "passed"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IftCheckRow {
    pub check: &'static str,
    pub instance: usize,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn row(check: &'static str, instance: usize, value: f64, tolerance: f64) -> IftCheckRow {
    IftCheckRow { check, instance, value, tolerance, passed: value <= tolerance }
}

/// A random layer, run forward on random input; returns its surrogate
/// derivatives and kernels.
fn random_instance<R: Rng>(rng: &mut R, neurons: usize, steps: usize) -> Result<(Array2<f64>, SrmKernels)> {
    let theta = rng.random_range(0.5..1.5);
    let kernels = match rng.random_range(0..3) {
        0 => SrmKernels::lif(LifParams::from_alpha(rng.random_range(0.3..0.99), theta, 1e-3)?),
        1 => SrmKernels::lif(LifParams::integrate_and_fire(1e-3, theta)?),
        _ => {
            let eps: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0.0..1.0)).collect();
            let nu: Vec<f64> = (0..rng.random_range(1..6)).map(|_| -rng.random_range(0.0..theta)).collect();
            SrmKernels::fir(CausalKernel::new(eps)?, CausalKernel::new(nu)?)
        }
    };
    let family = SurrogateFamily::ALL[rng.random_range(0..SurrogateFamily::ALL.len())];
    let surrogate = SurrogateSpec::new(family, rng.random_range(0.3..1.0), theta, [0.1, 1.0, 2.0][rng.random_range(0..3)])?;
    let inputs = rng.random_range(1..6);
    let weights = Array2::from_shape_simple_fn((neurons, inputs), || rng.random_range(-0.5..1.5));
    let layer = DenseLayer::new(weights, kernels.clone(), surrogate)?;
    let input = poisson_spikes(inputs, steps, 300.0, 1e-3, rng)?;
    let trace = forward_layer(&layer, &input, Mode::Hard)?;
    Ok((trace.surrogate_grads(&surrogate), kernels))
}

fn rel_tol(tol: f64, magnitude: f64) -> f64 {
    tol * magnitude.max(1.0)
}

pub fn run_ift_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let c = &cfg.ift;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();

    for k in 0..c.instances {
        let neurons = rng.random_range(1..=c.max_neurons);
        let steps = rng.random_range(1..=c.max_steps.min(DENSE_CAP / neurons));
        let (fp, kernels) = random_instance(&mut rng, neurons, steps)?;
        let nu = kernels.nu(steps);
        let jac_nu = if c.inject_fault { CausalKernel::new(nu.taps().iter().map(|v| -v).collect())? } else { nu.clone() };
        let jac = ift_jacobians_from_fprimes(&fp, &jac_nu)?;
        rows.push(row("determinant", k, (jac.determinant() - 1.0).abs(), 1e-8));

        let sigma = dense_from_sigma(&sigma_from_fprimes(&fp, &nu));
        let dense = solve_ift_dense(&jac)?;
        let mag = sigma.amax();
        rows.push(row("dense_vs_recursive_sigma", k, max_abs_diff(&dense, &sigma), rel_tol(1e-10, mag)));
        rows.push(row("substitution_vs_lu", k, max_abs_diff(&dense, &solve_ift_lu(&jac)?), rel_tol(1e-10, mag)));
        if let Some(p) = kernels.lif_params() {
            let closed = dense_from_sigma(&sigma_lif_from_fprimes(&fp, p.alpha(), p.theta()));
            rows.push(row("lif_closed_form_sigma", k, max_abs_diff(&closed, &sigma), rel_tol(1e-10, mag)));
        }
    }

    for k in 0..c.chi_sequences {
        let alpha = [0.3, 0.9, 1.0][k % 3];
        let theta = rng.random_range(0.5..2.0);
        let params = LifParams::from_alpha(alpha, theta, 1e-3)?;
        let steps = rng.random_range(2..=c.chi_max_steps);
        // keeps every factor alpha - theta·f' inside [-1, alpha]
        let fp: Vec<f64> = (0..steps).map(|_| rng.random_range(0.0..(1.0 + alpha) / theta)).collect();
        let mut err = 0.0f64;
        for m in 0..steps - 1 {
            for (j, (chi, gamma)) in chi_recursive(&fp, &params, m).iter().zip(gamma_recursive(&fp, &params, m)).enumerate() {
                let n = m + 1 + j;
                let cc = chi_closed_form(&fp, &params, m, n)?;
                let gc = gamma_closed_form(&fp, &params, m, n)?;
                err = err.max((cc - chi).abs() / cc.abs().max(1.0));
                err = err.max((gc - gamma).abs() / gc.abs().max(1.0));
            }
        }
        rows.push(row("chi_closed_form_vs_recursion", k, err, 1e-12));

        // Surrogates clamped to [0, (alpha - mu)/theta] keep every factor in
        // [mu, alpha]: chi stays within [0, alpha^k].
        let mu = c.mu.min(alpha);
        let bound = DecayBoundParams::new(mu, &params)?;
        let fp_row = Array2::from_shape_vec((1, steps), fp.clone()).expect("row shape");
        let clamped = clamp_fprimes(&fp_row, &bound);
        let leak = DecayBoundParams::new(alpha, &params)?;
        rows.push(row("clamped_chi_within_leak_envelope", k, check_decay_bound(&clamped, &params, &leak).violation(), 1e-12));

        // Surrogates in [(alpha - mu)/theta, alpha/theta] keep every factor
        // in [0, mu]: chi stays within [0, mu^k].
        let raised = fp_row.mapv(|f| f.clamp(bound.fprime_cap(), alpha / theta));
        rows.push(row("raised_chi_within_mu_envelope", k, check_decay_bound(&raised, &params, &bound).violation(), 1e-12));
    }

    let passed = rows.iter().all(|r| r.passed);
    let failures: Vec<_> = rows.iter().filter(|r| !r.passed).map(|r| json!({"check": r.check, "instance": r.instance, "value": r.value})).collect();
    Ok(RunOutput {
        csv: csv_table(IFT_CHECK_COLUMNS, &rows)?,
        metrics: json!({ "checks": rows.len(), "failures": failures }),
        passed,
    })
}
