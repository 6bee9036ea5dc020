//! Scalar/vector statistical kernels shared by every analytic formula.
//!
//! Conventions, frozen because every downstream formula assumes them:
//! central moments divide by the vector length (population form), while
//! [`sample_cov`]/[`sample_var`] divide by `n - 1`. All reductions use
//! Neumaier-compensated summation so that closed forms can be compared to
//! enumeration oracles at 1e-9 relative tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compensated (Neumaier) accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator of f64.
pub fn csum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    csum(values.iter().copied()) / values.len() as f64
}

/// Sample covariance with the `n - 1` denominator.
pub fn sample_cov(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "sample_cov length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput(
            "sample_cov needs at least two observations".into(),
        ));
    }
    let ma = mean(a);
    let mb = mean(b);
    let s = csum(a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)));
    Ok(s / (a.len() - 1) as f64)
}

/// Sample variance `sample_cov(a, a)`; non-negative.
pub fn sample_var(a: &[f64]) -> Result<f64> {
    if a.len() < 2 {
        return Err(Error::InvalidInput(
            "sample_var needs at least two observations".into(),
        ));
    }
    let m = mean(a);
    let s = csum(a.iter().map(|&x| (x - m) * (x - m)));
    Ok((s / (a.len() - 1) as f64).max(0.0))
}

/// First four moments of a proportion vector, population convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub mu2c: f64,
    pub mu3c: f64,
    pub mu4c: f64,
}

impl MomentSummary {
    /// Fourth central moment in excess of `mu2c^2` (non-negative by Jensen).
    pub fn mu4c_excess(&self) -> f64 {
        (self.mu4c - self.mu2c * self.mu2c).max(0.0)
    }

    /// Summary from explicit moment values (used by continuous design
    /// families where the moments are known in closed form).
    pub fn from_parts(mean: f64, mu2c: f64, mu3c: f64, mu4c: f64) -> Self {
        Self { mean, mu2c, mu3c, mu4c }
    }
}

/// Central moments `M^{-1} sum (pi_j - mean)^k` for k = 2, 3, 4.
pub fn central_moments(pi: &[f64]) -> Result<MomentSummary> {
    if pi.is_empty() {
        return Err(Error::InvalidInput("central_moments of empty vector".into()));
    }
    if pi.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("central_moments: non-finite entry".into()));
    }
    let m = mean(pi);
    let n = pi.len() as f64;
    let mu2c = csum(pi.iter().map(|&x| (x - m).powi(2))) / n;
    let mu3c = csum(pi.iter().map(|&x| (x - m).powi(3))) / n;
    let mu4c = csum(pi.iter().map(|&x| (x - m).powi(4))) / n;
    debug_assert!(mu2c >= 0.0 && mu4c + 1e-15 >= mu2c * mu2c);
    Ok(MomentSummary { mean: m, mu2c: mu2c.max(0.0), mu3c, mu4c: mu4c.max(0.0) })
}

/// Mean squared interaction of a matrix: the double-centered sum of squares
/// divided by `(m-1)(n-1)`. Zero iff the matrix is additive in its indices.
pub fn cross_interaction(rows: usize, cols: usize, x: &[f64]) -> Result<f64> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidInput(
            "cross_interaction needs at least a 2x2 matrix".into(),
        ));
    }
    if x.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "cross_interaction: {} entries for {}x{}",
            x.len(),
            rows,
            cols
        )));
    }
    let mut row_mean = vec![0.0; rows];
    let mut col_mean = vec![0.0; cols];
    for r in 0..rows {
        row_mean[r] = csum(x[r * cols..(r + 1) * cols].iter().copied()) / cols as f64;
    }
    for c in 0..cols {
        col_mean[c] = csum((0..rows).map(|r| x[r * cols + c])) / rows as f64;
    }
    let grand = csum(row_mean.iter().copied()) / rows as f64;
    let mut acc = KahanSum::new();
    for r in 0..rows {
        for c in 0..cols {
            let resid = x[r * cols + c] - row_mean[r] - col_mean[c] + grand;
            acc.add(resid * resid);
        }
    }
    Ok((acc.value() / ((rows - 1) as f64 * (cols - 1) as f64)).max(0.0))
}

/// Harmonic mean of a strictly positive vector.
///
/// An entry `<= 0` signals a cluster with zero treated (or zero control)
/// units, for which the stratified variance is undefined.
pub fn harmonic_mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidInput("harmonic_mean of empty vector".into()));
    }
    if x.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Domain(
            "harmonic_mean requires strictly positive entries".into(),
        ));
    }
    let s = csum(x.iter().map(|&v| 1.0 / v));
    Ok(x.len() as f64 / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn sample_cov_hand_cases() {
        assert!(close(
            sample_cov(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.0,
            1e-15
        ));
        assert_eq!(sample_cov(&[4.0, 4.0, 4.0], &[1.0, -2.0, 7.0]).unwrap(), 0.0);
        assert!(close(sample_cov(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), -0.5, 1e-15));
        assert!(sample_cov(&[1.0], &[1.0]).is_err());
        assert!(sample_cov(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn central_moment_cases() {
        let m = central_moments(&[0.3; 6]).unwrap();
        assert_eq!((m.mu2c, m.mu3c, m.mu4c), (0.0, 0.0, 0.0));

        let m = central_moments(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(close(m.mean, 0.5, 1e-15));
        assert!(close(m.mu2c, 0.25, 1e-15));
        assert!(close(m.mu3c, 0.0, 1e-15));
        assert!(close(m.mu4c, 0.0625, 1e-15));

        // Beta(1,1) quantiles for M = 3
        let m = central_moments(&[0.25, 0.5, 0.75]).unwrap();
        assert!(close(m.mu2c, 1.0 / 24.0, 1e-15));

        assert!(central_moments(&[]).is_err());
    }

    #[test]
    fn cross_interaction_cases() {
        // additive matrix -> 0
        let a = [1.0, 2.0];
        let b = [0.5, -1.0, 3.0];
        let mut x = vec![0.0; 6];
        for r in 0..2 {
            for c in 0..3 {
                x[r * 3 + c] = a[r] + b[c];
            }
        }
        assert!(cross_interaction(2, 3, &x).unwrap() < 1e-15);

        assert!(close(
            cross_interaction(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap(),
            1.0,
            1e-15
        ));
        assert!(cross_interaction(1, 3, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn cross_interaction_matches_elementwise_oracle() {
        // direct double-centering computed with naive loops
        let x: Vec<f64> = (0..12).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let (m, n) = (3, 4);
        let rm: Vec<f64> = (0..m)
            .map(|r| x[r * n..(r + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let cm: Vec<f64> = (0..n)
            .map(|c| (0..m).map(|r| x[r * n + c]).sum::<f64>() / m as f64)
            .collect();
        let g = x.iter().sum::<f64>() / 12.0;
        let mut ss = 0.0;
        for r in 0..m {
            for c in 0..n {
                ss += (x[r * n + c] - rm[r] - cm[c] + g).powi(2);
            }
        }
        let expect = ss / ((m - 1) as f64 * (n - 1) as f64);
        assert!(close(cross_interaction(m, n, &x).unwrap(), expect, 1e-13));
    }

    #[test]
    fn harmonic_mean_cases() {
        assert!(close(harmonic_mean(&[3.0, 3.0, 3.0]).unwrap(), 3.0, 1e-15));
        assert!(close(harmonic_mean(&[1.0 / 3.0, 1.0]).unwrap(), 0.5, 1e-15));
        assert!(harmonic_mean(&[0.5, 0.0]).is_err());
        assert!(harmonic_mean(&[0.5, -0.1]).is_err());
    }

    proptest! {
        #[test]
        fn cov_symmetric_and_shift_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 2..20),
            shift in -5.0f64..5.0,
        ) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let c1 = sample_cov(&a, &b).unwrap();
            let c2 = sample_cov(&b, &a).unwrap();
            prop_assert!(close(c1, c2, 1e-12));
            let shifted: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let c3 = sample_cov(&shifted, &b).unwrap();
            prop_assert!((c1 - c3).abs() < 1e-9);
        }

        #[test]
        fn mu2c_bounded_for_unit_interval(
            pi in prop::collection::vec(0.0f64..=1.0, 1..30),
        ) {
            let m = central_moments(&pi).unwrap();
            // For fixed mean, the variance is maximal on {0,1}-valued vectors.
            prop_assert!(m.mu2c <= m.mean * (1.0 - m.mean) + 1e-12);
            prop_assert!(m.mu4c + 1e-12 >= m.mu2c * m.mu2c);
        }

        #[test]
        fn harmonic_le_arithmetic(
            x in prop::collection::vec(0.01f64..10.0, 1..20),
        ) {
            let h = harmonic_mean(&x).unwrap();
            let a = mean(&x);
            prop_assert!(h <= a + 1e-12);
        }
    }

    #[test]
    fn mean_preserving_spread_lowers_harmonic_mean() {
        let base = [0.4, 0.4, 0.6, 0.6];
        let spread = [0.3, 0.5, 0.5, 0.7];
        assert!(harmonic_mean(&spread).unwrap() < harmonic_mean(&base).unwrap());
    }
}
