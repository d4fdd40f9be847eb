//! Evidence lower bound of the overdispersed factor model.
//!
//! Parameter-free constants (Gaussian normalizers, binomial coefficients) are
//! dropped. Column contributions are summed in column order so the value is
//! reproducible regardless of how many threads evaluate it.

use rayon::prelude::*;

use crate::data::{Dataset, FitConfig, LatentFamily, ModelParams, VariationalParams};
use crate::estep::column_predictor;
use crate::linalg::{clamped_exp, log1p_exp_neg, sigmoid};

/// Second-order approximation of `E[ln(1 + e^{-y})]` for `y ~ N(tau, sigma2)`.
pub fn expected_log1p_exp_neg(tau: f64, sigma2: f64) -> f64 {
    let g = sigmoid(tau);
    log1p_exp_neg(tau) + 0.5 * sigma2 * g * (1.0 - g)
}

/// Gaussian penalty `-(r^2 + s) / (2 lambda) - ln(lambda) / 2`.
#[inline]
fn gaussian_term(resid: f64, sigma2: f64, lambda: f64) -> f64 {
    -0.5 * ((resid * resid + sigma2) / lambda + lambda.ln())
}

/// ELBO contribution of one count or binomial site, entropy included.
pub(crate) fn site_term(
    family: LatentFamily,
    x: f64,
    tau: f64,
    s2: f64,
    ztilde: f64,
    lambda: f64,
    exp_clamp: f64,
) -> f64 {
    let lik = match family {
        LatentFamily::Poisson => x * tau - clamped_exp(tau + 0.5 * s2, exp_clamp).0,
        LatentFamily::Binomial { trials } => {
            let nt = trials as f64;
            (x - nt) * tau - nt * expected_log1p_exp_neg(tau, s2)
        }
    };
    lik + gaussian_term(tau - ztilde, s2, lambda) + 0.5 * s2.ln()
}

pub fn evaluate_elbo(
    ds: &Dataset,
    params: &ModelParams,
    var: &VariationalParams,
    config: &FitConfig,
) -> f64 {
    let n = ds.n();
    let p = ds.p();
    let x = ds.x();
    let offsets = ds.offsets();

    // latent rank of each column, if any
    let mut latent_of = vec![None; p];
    for (k, lc) in ds.latent().iter().enumerate() {
        latent_of[lc.col] = Some((k, lc.family));
    }

    let per_column: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|j| {
            let z = column_predictor(params, offsets, j);
            let lambda = params.variances[j];
            let mut acc = 0.0;
            match latent_of[j] {
                None => {
                    for i in 0..n {
                        acc += gaussian_term(x[(i, j)] - z[i], 0.0, lambda);
                    }
                }
                Some((k, family)) => {
                    for i in 0..n {
                        let tau = var.tau[(i, k)];
                        let s2 = var.sigma2[(i, k)];
                        acc +=
                            site_term(family, x[(i, j)], tau, s2, z[i], lambda, config.exp_clamp);
                    }
                }
            }
            acc
        })
        .collect();

    per_column.iter().sum()
}
