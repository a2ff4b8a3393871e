//! Loss functions over the network output.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which output signal a loss gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossGradKind {
    /// `dL/da` for the filtered output `a = epsilon ∗ s`.
    FilteredOutput,
    /// `dL/ds` for the raw output spikes.
    RawSpikes,
}

/// Gradient of the loss with respect to the network output, `N_L × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub kind: LossGradKind,
    pub values: Array2<f64>,
}

impl LossGrad {
    pub fn filtered(values: Array2<f64>) -> Self {
        Self { kind: LossGradKind::FilteredOutput, values }
    }

    pub fn raw(values: Array2<f64>) -> Self {
        Self { kind: LossGradKind::RawSpikes, values }
    }

    pub fn zeros_like(&self) -> Self {
        Self { kind: self.kind, values: Array2::zeros(self.values.raw_dim()) }
    }
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("output {:?} vs target {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean squared error over all neurons and time steps.
pub fn mse_loss(output: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, LossGrad)> {
    same_shape(output, target)?;
    let count = output.len() as f64;
    let diff = output - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let grad = diff.mapv(|d| 2.0 * d / count);
    Ok((loss, LossGrad::filtered(grad)))
}

fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn check_label(output: &Array2<f64>, label: usize) -> Result<()> {
    if label >= output.nrows() {
        return Err(Error::Label { label, classes: output.nrows() });
    }
    Ok(())
}

/// Cross-entropy on logits summed over time. The gradient is the same at every step.
pub fn ce_sum_over_time(output: &Array2<f64>, label: usize) -> Result<(f64, LossGrad)> {
    check_label(output, label)?;
    let logits = output.sum_axis(Axis(1)).to_vec();
    let (loss, g) = softmax_ce(&logits, label);
    let grad = Array2::from_shape_fn(output.raw_dim(), |(i, _)| g[i]);
    Ok((loss, LossGrad::filtered(grad)))
}

/// Cross-entropy on the per-class maximum over time. The gradient goes to
/// the first time step attaining the maximum.
pub fn ce_max_over_time(output: &Array2<f64>, label: usize) -> Result<(f64, LossGrad)> {
    check_label(output, label)?;
    let argmax: Vec<usize> = output
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (n, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = n;
                }
            }
            best
        })
        .collect();
    let logits: Vec<f64> = argmax.iter().enumerate().map(|(i, &n)| output[[i, n]]).collect();
    let (loss, g) = softmax_ce(&logits, label);
    let mut grad = Array2::zeros(output.raw_dim());
    for (i, &n) in argmax.iter().enumerate() {
        grad[[i, n]] = g[i];
    }
    Ok((loss, LossGrad::filtered(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_examples() {
        let t = array![[0.2, 0.4], [1.0, -3.0]];
        let (l, g) = mse_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.values.iter().all(|&v| v == 0.0));

        let (l, g) = mse_loss(&array![[1.0, 0.0]], &array![[0.0, 0.0]]).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.values, array![[1.0, 0.0]]);
        assert_eq!(g.kind, LossGradKind::FilteredOutput);

        let o = array![[1.0, -2.0, 0.5]];
        let tg = array![[0.0, 1.0, 2.0]];
        let (l1, _) = mse_loss(&o, &tg).unwrap();
        let (l3, _) = mse_loss(&(&o * 3.0), &(&tg * 3.0)).unwrap();
        assert!((l3 - 9.0 * l1).abs() < 1e-12);

        assert!(mse_loss(&o, &array![[1.0]]).is_err());
    }

    #[test]
    fn ce_sum_examples() {
        let out = Array2::from_elem((4, 3), 0.7);
        let (l, _) = ce_sum_over_time(&out, 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);

        let (l, _) = ce_sum_over_time(&array![[1.0], [0.0]], 0).unwrap();
        assert!((l - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!((l - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);

        let (l, g) = ce_sum_over_time(&array![[800.0, 900.0], [0.0, 0.0]], 0).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.values.iter().all(|v| v.abs() < 1e-12));

        let (_, g) = ce_sum_over_time(&array![[1.0, 0.0, 2.0], [0.5, 0.5, 0.5]], 1).unwrap();
        for row in g.values.axis_iter(Axis(0)) {
            assert!(row.iter().all(|&v| v == row[0]));
        }
        assert!(ce_sum_over_time(&out, 4).is_err());
    }

    #[test]
    fn ce_max_examples() {
        let out = array![[0.3, 0.3, 0.3], [1.0, 1.0, 1.0]];
        let (l, g) = ce_max_over_time(&out, 1).unwrap();
        let (l_single, _) = ce_sum_over_time(&array![[0.3], [1.0]], 1).unwrap();
        assert!((l - l_single).abs() < 1e-15);
        assert!(g.values.column(0).iter().all(|&v| v != 0.0));
        assert!(g.values.slice(ndarray::s![.., 1..]).iter().all(|&v| v == 0.0));

        let out = array![[0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 0.0, 5.0]];
        let (_, g) = ce_max_over_time(&out, 0).unwrap();
        assert!(g.values[[0, 1]] != 0.0 && g.values[[1, 3]] != 0.0);
        assert_eq!(g.values.iter().filter(|&&v| v != 0.0).count(), 2);
        assert!(ce_max_over_time(&out, 2).is_err());
    }

    #[test]
    fn ce_max_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = rng.random_range(2..6);
            let t = rng.random_range(1..10);
            let out = Array2::from_shape_simple_fn((k, t), || rng.random_range(-3.0..3.0));
            let label = rng.random_range(0..k);
            let maxes: Vec<f64> = (0..k)
                .map(|i| (0..t).map(|n| out[[i, n]]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let denom: f64 = maxes.iter().map(|m| m.exp()).sum();
            let brute = -(maxes[label].exp() / denom).ln();
            let (l, _) = ce_max_over_time(&out, label).unwrap();
            assert!((l - brute).abs() < 1e-12);
        }
    }
}
