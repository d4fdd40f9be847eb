//! Column-space agreement statistics and the linear factor model baseline.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{column_means, orthonormal_basis, truncated_svd};

/// `Tr(A0^T P A0) / Tr(A0^T A0)` with `P` the projector onto the column
/// space of `ahat`. Lies in `[0, 1]`; 1 means `A0` lies in that space.
pub fn trace_statistic(ahat: &DMatrix<f64>, a0: &DMatrix<f64>) -> Result<f64> {
    if ahat.nrows() != a0.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "trace statistic: {} rows vs {} rows",
            ahat.nrows(),
            a0.nrows()
        )));
    }
    let basis = orthonormal_basis(ahat)?;
    let denom = a0.norm_squared();
    if !(denom > 0.0) {
        return Err(Error::RankDeficient);
    }
    let proj = basis.tr_mul(a0).norm_squared();
    Ok((proj / denom).clamp(0.0, 1.0))
}

fn upsilon(b: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(b.nrows(), b.ncols() + 1);
    u.column_mut(0).copy_from(mu);
    u.columns_mut(1, b.ncols()).copy_from(b);
    u
}

/// Trace statistic of the intercept-loading matrix `[mu | B]`.
pub fn trace_statistic_upsilon(
    bhat: &DMatrix<f64>,
    muhat: &DVector<f64>,
    b0: &DMatrix<f64>,
    mu0: &DVector<f64>,
) -> Result<f64> {
    trace_statistic(&upsilon(bhat, muhat), &upsilon(b0, mu0))
}

#[derive(Debug, Clone)]
pub struct LfmFit {
    pub factors: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
    pub intercepts: DVector<f64>,
}

/// Principal-components estimate of a linear factor model, ignoring variable
/// types.
pub fn fit_lfm(x: &DMatrix<f64>, q: usize) -> Result<LfmFit> {
    let n = x.nrows();
    let mu = column_means(x);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    let mut svd = truncated_svd(&centered, q)?;
    svd.fix_signs();
    let sqrt_n = (n as f64).sqrt();
    Ok(LfmFit {
        factors: &svd.u * sqrt_n,
        loadings: &svd.v * DMatrix::from_diagonal(&svd.singular_values) / sqrt_n,
        intercepts: mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pseudo(i: usize, j: usize, salt: f64) -> f64 {
        let h = ((i as f64 + 0.37) * 12.9898 + (j as f64 + 1.1) * 78.233 + salt).sin() * 43758.5453;
        (h.fract() - 0.5) * 2.0
    }

    #[test]
    fn identical_matrices_give_one() {
        let a = DMatrix::from_fn(20, 3, |i, k| pseudo(i, k, 0.0));
        assert_relative_eq!(trace_statistic(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_spaces_give_zero() {
        let a = DMatrix::from_fn(6, 2, |i, k| if i == k { 1.0 } else { 0.0 });
        let b = DMatrix::from_fn(6, 2, |i, k| if i == k + 3 { 2.0 } else { 0.0 });
        assert_eq!(trace_statistic(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn invariant_to_invertible_recombination() {
        let a = DMatrix::from_fn(15, 3, |i, k| pseudo(i, k, 1.0));
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, -3.0, 1.0, 0.0, 0.5]);
        let b = DMatrix::from_fn(15, 3, |i, k| pseudo(i, k, 2.0));
        let base = trace_statistic(&a, &b).unwrap();
        assert_relative_eq!(
            trace_statistic(&(&a * r), &b).unwrap(),
            base,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rank_deficient_estimate_rejected() {
        let a = DMatrix::from_fn(8, 2, |i, _| i as f64);
        let b = DMatrix::from_fn(8, 2, |i, k| pseudo(i, k, 3.0));
        assert!(trace_statistic(&a, &b).is_err());
        assert!(trace_statistic(&b, &DMatrix::zeros(7, 2)).is_err());
    }

    #[test]
    fn upsilon_identical_is_one() {
        let b = DMatrix::from_fn(10, 2, |i, k| pseudo(i, k, 4.0));
        let mu = DVector::from_fn(10, |i, _| pseudo(i, 9, 5.0));
        assert_relative_eq!(
            trace_statistic_upsilon(&b, &mu, &b, &mu).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lfm_recovers_exact_low_rank() {
        let h = DMatrix::from_fn(25, 2, |i, k| pseudo(i, k, 6.0));
        let b = DMatrix::from_fn(9, 2, |j, k| pseudo(j, k, 7.0));
        let x = &h * b.transpose();
        let fit = fit_lfm(&x, 2).unwrap();
        let mut hc = h.clone();
        for mut c in hc.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        assert_relative_eq!(
            trace_statistic(&fit.factors, &hc).unwrap(),
            1.0,
            epsilon = 1e-10
        );
    }
}
