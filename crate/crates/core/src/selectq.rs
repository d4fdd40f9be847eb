//! Choosing the number of factors from the singular values of a deliberately
//! over-specified loading matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FitConfig};
use crate::error::{Error, Result};
use crate::fit::fit;

/// Denominators below this fraction of the leading singular value make the
/// ratio undefined.
pub const RATIO_FLOOR: f64 = 1e-12;

pub const DEFAULT_Q_MAX: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrReport {
    /// Nonincreasing singular values of the loading matrix.
    pub singular_values: Vec<f64>,
    /// `nu_k / nu_{k+1}` for `k = 1..q_max-1`; `None` where undefined.
    pub ratios: Vec<Option<f64>>,
    pub q_hat: usize,
    pub max_ratio: f64,
}

pub fn singular_value_ratios(loadings: &DMatrix<f64>) -> Result<SvrReport> {
    if loadings.ncols() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two loading columns to form a ratio".into(),
        ));
    }
    let mut sv: Vec<f64> = loadings.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let lead = sv[0];
    if !(lead > 0.0) {
        return Err(Error::ZeroLoadings);
    }
    let ratios: Vec<Option<f64>> = sv
        .windows(2)
        .map(|w| (w[1] > RATIO_FLOOR * lead).then(|| w[0] / w[1]))
        .collect();
    let mut q_hat = 1;
    let mut max_ratio = f64::NEG_INFINITY;
    for (k, r) in ratios.iter().enumerate() {
        if let Some(r) = *r {
            if r > max_ratio {
                max_ratio = r;
                q_hat = k + 1;
            }
        }
    }
    if max_ratio == f64::NEG_INFINITY {
        // only the leading value is nonzero
        max_ratio = f64::INFINITY;
        q_hat = 1;
    }
    Ok(SvrReport {
        singular_values: sv,
        ratios,
        q_hat,
        max_ratio,
    })
}

/// Fit with `q = q_max` and read the factor count off the loading spectrum.
pub fn select_num_factors(ds: &Dataset, q_max: usize, config: &FitConfig) -> Result<SvrReport> {
    let mut cfg = config.clone();
    cfg.q = q_max;
    let res = fit(ds, &cfg)?;
    singular_value_ratios(&res.params.loadings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn diagonal_loadings() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 9.0, 0.1, 0.05]));
        let r = singular_value_ratios(&b).unwrap();
        assert_eq!(r.q_hat, 2);
        assert_relative_eq!(r.ratios[0].unwrap(), 10.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(r.ratios[1].unwrap(), 90.0, epsilon = 1e-9);
        assert_relative_eq!(r.ratios[2].unwrap(), 2.0, epsilon = 1e-9);
        assert_relative_eq!(r.max_ratio, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn equal_norm_orthogonal_columns_tie_to_one() {
        let b = DMatrix::from_diagonal(&DVector::from_element(4, 3.0));
        let r = singular_value_ratios(&b).unwrap();
        assert_eq!(r.q_hat, 1);
        assert!(r.ratios.iter().all(|x| (x.unwrap() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_loadings_rejected_and_tiny_denominators_skipped() {
        assert!(matches!(
            singular_value_ratios(&DMatrix::zeros(5, 3)),
            Err(Error::ZeroLoadings)
        ));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0, 0.0]));
        let r = singular_value_ratios(&b).unwrap();
        assert_eq!(r.ratios[1], None);
        assert_eq!(r.q_hat, 1);
    }

    #[test]
    fn scale_invariant() {
        let b = DMatrix::from_fn(6, 3, |j, k| ((j * 7 + k * 3) as f64).sin());
        let r1 = singular_value_ratios(&b).unwrap();
        let r2 = singular_value_ratios(&(b * 123.0)).unwrap();
        assert_eq!(r1.q_hat, r2.q_hat);
        assert_relative_eq!(r1.max_ratio, r2.max_ratio, max_relative = 1e-10);
    }
}
