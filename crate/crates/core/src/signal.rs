//! Causal discrete-time convolution and correlation along the time axis.
//!
//! Signals are `channels × T` matrices. Time is 0-based and the signal is
//! taken to be zero before `n = 0`. Every operation here acts on each
//! channel independently with the same kernel.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A finite causal kernel. `taps[k]` is the coefficient applied at lag `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalKernel {
    taps: Vec<f64>,
}

impl CausalKernel {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidParam("kernel needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("kernel taps"));
        }
        Ok(Self { taps })
    }

    /// The unit impulse `[1]`.
    pub fn delta() -> Self {
        Self { taps: vec![1.0] }
    }

    /// `scale · decay^k` for `k` in `0..len`.
    pub fn geometric(scale: f64, decay: f64, len: usize) -> Self {
        let mut taps = Vec::with_capacity(len.max(1));
        let mut v = scale;
        for _ in 0..len.max(1) {
            taps.push(v);
            v *= decay;
        }
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tap at lag `k`, zero beyond the support.
    #[inline]
    pub fn tap(&self, k: usize) -> f64 {
        self.taps.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.taps.iter().all(|&t| t == 0.0)
    }
}

/// A real-valued `channels × T` signal sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Array2<f64>,
    dt: f64,
}

impl TimeSeries {
    pub fn new(values: Array2<f64>, dt: f64) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Shape("time series needs T >= 1".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series"));
        }
        Ok(Self { values, dt })
    }

    /// Builds a series from nested rows; convenient in tests and fixtures.
    pub fn from_rows(rows: &[&[f64]], dt: f64) -> Result<Self> {
        let t = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let values = Array2::from_shape_vec((rows.len(), t), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(values, dt)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn steps(&self) -> usize {
        self.values.ncols()
    }

    fn with_values(&self, values: Array2<f64>) -> Self {
        Self { values, dt: self.dt }
    }
}

/// `y[n] = Σ_{k=0..min(n, K-1)} taps[k] · x[n-k]`.
pub fn causal_conv(kernel: &CausalKernel, x: &TimeSeries) -> TimeSeries {
    x.with_values(conv_rows(kernel, x.values.view()))
}

/// `y[n] = (kernel ∗ x)[n-1]`, with `y[0] = 0`.
pub fn delayed_conv(kernel: &CausalKernel, x: &TimeSeries) -> TimeSeries {
    x.with_values(delayed_conv_rows(kernel, x.values.view()))
}

/// `y[m] = Σ_{k=m..T-1, k-m<K} taps[k-m] · e[k]`; the adjoint of [`causal_conv`].
pub fn correlate_time(kernel: &CausalKernel, e: &TimeSeries) -> TimeSeries {
    e.with_values(correlate_rows(kernel, e.values.view()))
}

pub(crate) fn conv_rows(kernel: &CausalKernel, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (c, t) = x.dim();
    let mut y = Array2::zeros((c, t));
    let taps = kernel.taps();
    for (xr, mut yr) in x.axis_iter(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
        for n in 0..t {
            let kmax = n.min(taps.len() - 1);
            let mut acc = 0.0;
            for (k, &w) in taps.iter().enumerate().take(kmax + 1) {
                acc += w * xr[n - k];
            }
            yr[n] = acc;
        }
    }
    debug_assert_eq!(y.dim(), (c, t));
    y
}

pub(crate) fn delayed_conv_rows(kernel: &CausalKernel, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (c, t) = x.dim();
    let mut y = Array2::zeros((c, t));
    let taps = kernel.taps();
    for (xr, mut yr) in x.axis_iter(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
        for n in 1..t {
            let kmax = (n - 1).min(taps.len() - 1);
            let mut acc = 0.0;
            for (k, &w) in taps.iter().enumerate().take(kmax + 1) {
                acc += w * xr[n - 1 - k];
            }
            yr[n] = acc;
        }
    }
    y
}

pub(crate) fn correlate_rows(kernel: &CausalKernel, e: ArrayView2<'_, f64>) -> Array2<f64> {
    let (c, t) = e.dim();
    let mut y = Array2::zeros((c, t));
    let taps = kernel.taps();
    for (er, mut yr) in e.axis_iter(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
        for m in 0..t {
            let kmax = (t - 1 - m).min(taps.len() - 1);
            let mut acc = 0.0;
            for (k, &w) in taps.iter().enumerate().take(kmax + 1) {
                acc += w * er[m + k];
            }
            yr[m] = acc;
        }
    }
    y
}

/// Causal filtering with the geometric kernel `decay^k` in O(T):
/// `y[n] = x[n] + decay · y[n-1]`.
pub(crate) fn geometric_filter_rows(decay: f64, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut y = x.to_owned();
    for mut row in y.axis_iter_mut(Axis(0)) {
        for n in 1..row.len() {
            row[n] += decay * row[n - 1];
        }
    }
    y
}

/// Correlation with the geometric kernel `decay^k` in O(T):
/// `y[m] = e[m] + decay · y[m+1]`.
pub(crate) fn geometric_correlate_rows(decay: f64, e: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut y = e.to_owned();
    for mut row in y.axis_iter_mut(Axis(0)) {
        for m in (0..row.len().saturating_sub(1)).rev() {
            row[m] += decay * row[m + 1];
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn ts(rows: &[&[f64]]) -> TimeSeries {
        TimeSeries::from_rows(rows, 1e-3).unwrap()
    }

    fn k(taps: &[f64]) -> CausalKernel {
        CausalKernel::new(taps.to_vec()).unwrap()
    }

    // Direct double loop over (n, j) with the definition written out.
    fn conv_oracle(taps: &[f64], x: &[f64]) -> Vec<f64> {
        let t = x.len();
        let mut y = vec![0.0; t];
        for n in 0..t {
            for j in 0..=n {
                let lag = n - j;
                if lag < taps.len() {
                    y[n] += taps[lag] * x[j];
                }
            }
        }
        y
    }

    fn corr_oracle(taps: &[f64], e: &[f64]) -> Vec<f64> {
        let t = e.len();
        let mut y = vec![0.0; t];
        for m in 0..t {
            for kk in m..t {
                if kk - m < taps.len() {
                    y[m] += taps[kk - m] * e[kk];
                }
            }
        }
        y
    }

    #[test]
    fn conv_examples() {
        let y = causal_conv(&k(&[1.0]), &ts(&[&[3.0, -1.0, 2.0]]));
        assert_eq!(y.values(), &array![[3.0, -1.0, 2.0]]);

        let y = causal_conv(&k(&[1.0, 0.5]), &ts(&[&[0.0, 0.0, 0.0]]));
        assert_eq!(y.values(), &array![[0.0, 0.0, 0.0]]);

        let expected = conv_oracle(&[1.0, 0.5], &[1.0, 0.0, 1.0]);
        assert_eq!(expected, vec![1.0, 0.5, 1.0]);
        let y = causal_conv(&k(&[1.0, 0.5]), &ts(&[&[1.0, 0.0, 1.0]]));
        assert_eq!(y.values().row(0).to_vec(), expected);
    }

    #[test]
    fn delayed_conv_examples() {
        let y = delayed_conv(&k(&[-1.0]), &ts(&[&[1.0, 0.0, 0.0]]));
        assert_eq!(y.values(), &array![[0.0, -1.0, 0.0]]);

        let y = delayed_conv(&k(&[0.3, -2.0, 7.0]), &ts(&[&[0.0; 5]]));
        assert!(y.values().iter().all(|&v| v == 0.0));

        let full = conv_oracle(&[-1.0, -0.5], &[1.0, 1.0, 0.0]);
        let expected = vec![0.0, full[0], full[1]];
        assert_eq!(expected, vec![0.0, -1.0, -1.5]);
        let y = delayed_conv(&k(&[-1.0, -0.5]), &ts(&[&[1.0, 1.0, 0.0]]));
        assert_eq!(y.values().row(0).to_vec(), expected);
    }

    #[test]
    fn correlate_examples() {
        let y = correlate_time(&k(&[1.0]), &ts(&[&[2.0, 5.0, -1.0]]));
        assert_eq!(y.values(), &array![[2.0, 5.0, -1.0]]);

        let expected = corr_oracle(&[1.0, 0.5], &[0.0, 0.0, 1.0]);
        assert_eq!(expected, vec![0.0, 0.5, 1.0]);
        let y = correlate_time(&k(&[1.0, 0.5]), &ts(&[&[0.0, 0.0, 1.0]]));
        assert_eq!(y.values().row(0).to_vec(), expected);

        let y = correlate_time(&k(&[1.0, 0.5, 0.25]), &ts(&[&[1.0, 0.0, 0.0]]));
        assert_eq!(y.values(), &array![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CausalKernel::new(vec![]).is_err());
        assert!(CausalKernel::new(vec![f64::NAN]).is_err());
        assert!(TimeSeries::new(Array2::zeros((1, 0)), 1.0).is_err());
        assert!(TimeSeries::new(Array2::zeros((1, 2)), 0.0).is_err());
        assert!(TimeSeries::new(array![[1.0, f64::INFINITY]], 1.0).is_err());
    }

    #[test]
    fn geometric_fast_paths_match_materialized_kernel() {
        let x = array![[1.0, 0.0, 2.0, -1.0, 0.5, 0.0, 3.0]];
        let kern = CausalKernel::geometric(1.0, 0.7, x.ncols());
        let a = geometric_filter_rows(0.7, x.view());
        let b = conv_rows(&kern, x.view());
        let c = geometric_correlate_rows(0.7, x.view());
        let d = correlate_rows(&kern, x.view());
        for (p, q) in a.iter().zip(&b).chain(c.iter().zip(&d)) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    fn signal_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..40, 1usize..8).prop_flat_map(|(t, kl)| {
            (
                prop::collection::vec(-3.0f64..3.0, kl),
                prop::collection::vec(-3.0f64..3.0, t),
                prop::collection::vec(-3.0f64..3.0, t),
            )
        })
    }

    proptest! {
        #[test]
        fn conv_and_correlation_are_adjoint((taps, x, e) in signal_pair()) {
            let kern = k(&taps);
            let xs = ts(&[&x]);
            let es = ts(&[&e]);
            let lhs: f64 = causal_conv(&kern, &xs).values().iter().zip(&e).map(|(a, b)| a * b).sum();
            let rhs: f64 = correlate_time(&kern, &es).values().iter().zip(&x).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn conv_matches_oracle_and_delay((taps, x, _e) in signal_pair()) {
            let kern = k(&taps);
            let xs = ts(&[&x]);
            let y = causal_conv(&kern, &xs);
            let yd = delayed_conv(&kern, &xs);
            let oracle = conv_oracle(&taps, &x);
            for n in 0..x.len() {
                prop_assert!((y.values()[[0, n]] - oracle[n]).abs() < 1e-12);
                if n >= 1 {
                    prop_assert_eq!(yd.values()[[0, n]], y.values()[[0, n - 1]]);
                }
            }
            prop_assert_eq!(yd.values()[[0, 0]], 0.0);
        }

        #[test]
        fn conv_is_linear_and_shift_equivariant((taps, x, e) in signal_pair(), c in -2.0f64..2.0) {
            let kern = k(&taps);
            let mix: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + c * b).collect();
            let y_mix = causal_conv(&kern, &ts(&[&mix]));
            let yx = causal_conv(&kern, &ts(&[&x]));
            let ye = causal_conv(&kern, &ts(&[&e]));
            for n in 0..x.len() {
                let lin = yx.values()[[0, n]] + c * ye.values()[[0, n]];
                prop_assert!((y_mix.values()[[0, n]] - lin).abs() < 1e-10);
            }
            // Delaying the input by one step delays the output by one step.
            let mut shifted = vec![0.0];
            shifted.extend_from_slice(&x[..x.len() - 1]);
            let ys = causal_conv(&kern, &ts(&[&shifted]));
            for n in 1..x.len() {
                prop_assert!((ys.values()[[0, n]] - yx.values()[[0, n - 1]]).abs() < 1e-12);
            }
        }
    }
}
