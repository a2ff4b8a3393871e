//! Dense Jacobians of a layer's implicit equations.
//!
//! For one layer, with `z` fixed, the dependent variables `s` and `u` satisfy
//!
//! ```text
//! Phi_s = s - f_s(u)               = 0
//! Phi_u = u - z - (nu ∗ s)[n-1]    = 0
//! ```
//!
//! Ordering rows `(Phi_s, Phi_u)` and columns `(s, u)`, with every block
//! indexed time-major (`n·N + i`), the Jacobians are
//!
//! ```text
//! J_D = [[ I, -F ],      J_I = [[  0 ],
//!        [ -N,  I ]]             [ -I ]]
//! ```
//!
//! where `F = diag(f'(u))` and `N` is strictly block-lower-triangular with
//! `N[(m,i),(k,i)] = nu_{m-1-k}`. Eliminating `u` leaves
//! `(I - F N) ds/dz = F`, a unit lower-triangular system.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::LayerTrace;
use crate::grad::SigmaBlock;
use crate::neuron::{SrmKernels, SurrogateSpec};
use crate::signal::CausalKernel;
use ndarray::Array2;

/// Largest `N·T` for which dense matrices are built.
pub const DENSE_CAP: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseJacobians {
    /// `2NT × 2NT`, rows `(Phi_s, Phi_u)`, columns `(s, u)`.
    pub jd: DMatrix<f64>,
    /// `2NT × NT`, columns `z`.
    pub ji: DMatrix<f64>,
    pub neurons: usize,
    pub steps: usize,
}

impl DenseJacobians {
    pub fn size(&self) -> usize {
        self.neurons * self.steps
    }

    /// Row/column of neuron `i` at step `n` within one block.
    pub fn index(&self, neuron: usize, step: usize) -> usize {
        step * self.neurons + neuron
    }

    pub fn determinant(&self) -> f64 {
        self.jd.clone().lu().determinant()
    }

    /// The `F = diag(f')` block, read back from `J_D`.
    pub fn f_block(&self) -> DMatrix<f64> {
        let m = self.size();
        -self.jd.view((0, m), (m, m))
    }

    /// The `N` block, read back from `J_D`.
    pub fn n_block(&self) -> DMatrix<f64> {
        let m = self.size();
        -self.jd.view((m, 0), (m, m))
    }
}

pub fn ift_jacobians_from_fprimes(fprimes: &Array2<f64>, nu: &CausalKernel) -> Result<DenseJacobians> {
    let (neurons, steps) = fprimes.dim();
    let m = neurons * steps;
    if m > DENSE_CAP {
        return Err(Error::TooLarge { size: m, cap: DENSE_CAP });
    }
    let mut jd = DMatrix::<f64>::identity(2 * m, 2 * m);
    let mut ji = DMatrix::<f64>::zeros(2 * m, m);
    for n in 0..steps {
        for i in 0..neurons {
            let r = n * neurons + i;
            jd[(r, m + r)] = -fprimes[[i, n]];
            for k in 0..n {
                jd[(m + r, k * neurons + i)] = -nu.tap(n - 1 - k);
            }
            ji[(m + r, r)] = -1.0;
        }
    }
    Ok(DenseJacobians { jd, ji, neurons, steps })
}

pub fn build_ift_jacobians(trace: &LayerTrace, kernels: &SrmKernels, spec: &SurrogateSpec) -> Result<DenseJacobians> {
    let fp = trace.surrogate_grads(spec);
    ift_jacobians_from_fprimes(&fp, &kernels.nu(trace.steps()))
}

/// `ds/dz` (`NT × NT`, time-major) by forward substitution on
/// `(I - F N) X = F`.
pub fn solve_ift_dense(jac: &DenseJacobians) -> Result<DMatrix<f64>> {
    let m = jac.size();
    let f = jac.f_block();
    let a = DMatrix::identity(m, m) - &f * jac.n_block();
    for r in 0..m {
        if (a[(r, r)] - 1.0).abs() > 1e-12 || (r + 1..m).any(|c| a[(r, c)] != 0.0) {
            return Err(Error::Shape("reduced IFT system is not unit lower-triangular".into()));
        }
    }
    let mut x = f;
    for c in 0..m {
        for r in 0..m {
            let mut acc = x[(r, c)];
            for k in 0..r {
                acc -= a[(r, k)] * x[(k, c)];
            }
            x[(r, c)] = acc;
        }
    }
    Ok(x)
}

/// `ds/dz` from a general LU solve of `J_D · D = -J_I`, for cross-checking
/// [`solve_ift_dense`].
pub fn solve_ift_lu(jac: &DenseJacobians) -> Result<DMatrix<f64>> {
    let m = jac.size();
    let rhs = -&jac.ji;
    let d = jac
        .jd
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Shape("J_D is singular".into()))?;
    Ok(d.rows(0, m).into_owned())
}

/// A [`SigmaBlock`] laid out in the same time-major dense form.
pub fn dense_from_sigma(sigma: &SigmaBlock) -> DMatrix<f64> {
    let (nn, t) = (sigma.neurons(), sigma.steps());
    let mut out = DMatrix::zeros(nn * t, nn * t);
    for i in 0..nn {
        for n in 0..t {
            for m in n..t {
                out[(m * nn + i, n * nn + i)] = sigma.get(i, n, m);
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}
