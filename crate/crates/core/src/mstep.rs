//! Variational M-step: closed-form block updates of loadings, factor scores,
//! intercepts and dispersion variances, each maximizing the ELBO with the
//! other blocks held fixed.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, FitConfig, ModelParams, VariationalParams};
use crate::error::{Error, Result};
use crate::linalg::{column_means, spd_inverse};

/// Offset-adjusted responses and the matching posterior variances (zero on
/// continuous columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveResponse {
    pub xbar: DMatrix<f64>,
    pub sigma2_full: DMatrix<f64>,
}

pub fn effective_response(ds: &Dataset, var: &VariationalParams) -> EffectiveResponse {
    let mut xbar = ds.x().clone();
    let mut sigma2_full = DMatrix::zeros(ds.n(), ds.p());
    for (k, lc) in ds.latent().iter().enumerate() {
        xbar.column_mut(lc.col).copy_from(&var.tau.column(k));
        sigma2_full
            .column_mut(lc.col)
            .copy_from(&var.sigma2.column(k));
    }
    let offsets = ds.offsets();
    for mut col in xbar.column_iter_mut() {
        col -= offsets;
    }
    EffectiveResponse { xbar, sigma2_full }
}

fn centered(xbar: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut r = xbar.clone();
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    r
}

/// `b_j = (H^T H)^{-1} sum_i h_i (xbar_ij - mu_j)` for all columns at once.
pub fn update_loadings(
    factors: &DMatrix<f64>,
    xbar: &DMatrix<f64>,
    mu: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let gram_inv = spd_inverse(&factors.tr_mul(factors)).ok_or(Error::DegenerateFactors)?;
    let r = centered(xbar, mu);
    Ok(r.tr_mul(factors) * gram_inv)
}

/// `h_i = (B^T L^{-1} B)^{-1} sum_j b_j (xbar_ij - mu_j) / lambda_j` for all rows.
pub fn update_factors(
    loadings: &DMatrix<f64>,
    lambda: &DVector<f64>,
    xbar: &DMatrix<f64>,
    mu: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut weighted = loadings.clone();
    for (j, mut row) in weighted.row_iter_mut().enumerate() {
        row /= lambda[j];
    }
    let gram_inv = spd_inverse(&loadings.tr_mul(&weighted)).ok_or(Error::DegenerateLoadings)?;
    let r = centered(xbar, mu);
    Ok(r * weighted * gram_inv)
}

/// Column means of `xbar - H B^T`.
pub fn update_intercepts(
    loadings: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    xbar: &DMatrix<f64>,
) -> DVector<f64> {
    let resid = xbar - factors * loadings.transpose();
    column_means(&resid)
}

/// Mean squared residual plus posterior variance per column, floored.
pub fn update_variances(
    loadings: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    mu: &DVector<f64>,
    xbar: &DMatrix<f64>,
    sigma2_full: &DMatrix<f64>,
    lambda_floor: f64,
) -> DVector<f64> {
    let n = xbar.nrows() as f64;
    let fitted = factors * loadings.transpose();
    DVector::from_fn(xbar.ncols(), |j, _| {
        let mut acc = 0.0;
        for i in 0..xbar.nrows() {
            let r = xbar[(i, j)] - fitted[(i, j)] - mu[j];
            acc += r * r + sigma2_full[(i, j)];
        }
        (acc / n).max(lambda_floor)
    })
}

/// One Gauss-Seidel sweep: loadings, factors, intercepts, variances.
pub fn m_step(
    ds: &Dataset,
    params: &ModelParams,
    var: &VariationalParams,
    config: &FitConfig,
) -> Result<ModelParams> {
    let eff = effective_response(ds, var);
    let loadings = update_loadings(&params.factors, &eff.xbar, &params.intercepts)?;
    let factors = update_factors(&loadings, &params.variances, &eff.xbar, &params.intercepts)?;
    let intercepts = update_intercepts(&loadings, &factors, &eff.xbar);
    let variances = update_variances(
        &loadings,
        &factors,
        &intercepts,
        &eff.xbar,
        &eff.sigma2_full,
        config.lambda_floor,
    );
    Ok(ModelParams {
        loadings,
        intercepts,
        factors,
        variances,
    })
}
