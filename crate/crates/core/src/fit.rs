//! Initialization, the variational EM loop and the identifiability
//! projection.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, FitConfig, FitResult, LatentFamily, ModelParams, VariationalParams};
use crate::elbo::evaluate_elbo;
use crate::error::{Error, Result};
use crate::estep::e_step;
use crate::linalg::{column_means, product_svd, truncated_svd};
use crate::mstep::m_step;

/// Surrogate matrix used for initialization: counts on the `ln(1 + x)`
/// scale, everything else as observed.
pub fn surrogate(ds: &Dataset) -> DMatrix<f64> {
    let mut xt = ds.x().clone();
    for lc in ds.latent() {
        if lc.family == LatentFamily::Poisson {
            xt.column_mut(lc.col).apply(|v| *v = v.ln_1p());
        }
    }
    xt
}

/// Starting values from a rank-`q` SVD of the centered surrogate matrix.
/// Offsets are removed before centering; with zero offsets this is the plain
/// surrogate SVD.
pub fn initialize(ds: &Dataset, q: usize) -> Result<(ModelParams, VariationalParams)> {
    let (n, p) = (ds.n(), ds.p());
    if q == 0 || q >= n.min(p) {
        return Err(Error::InvalidConfig(format!(
            "q = {q} must be in 1..{}",
            n.min(p)
        )));
    }
    let xt = surrogate(ds);
    let mut centered = xt.clone();
    for mut col in centered.column_iter_mut() {
        col -= ds.offsets();
    }
    let mu = column_means(&centered);
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    let mut svd = truncated_svd(&centered, q)?;
    svd.fix_signs();
    let sqrt_n = (n as f64).sqrt();
    let factors = &svd.u * sqrt_n;
    let loadings = &svd.v * DMatrix::from_diagonal(&svd.singular_values) / sqrt_n;

    let m = ds.latent().len();
    let tau = DMatrix::from_fn(n, m, |i, k| xt[(i, ds.latent()[k].col)]);
    let sigma2 = DMatrix::from_element(n, m, 1.0);

    Ok((
        ModelParams {
            loadings,
            intercepts: mu,
            factors,
            variances: DVector::from_element(p, 1.0),
        },
        VariationalParams { tau, sigma2 },
    ))
}

/// Re-express a fit so that the factor scores are centered with
/// `H^T H / n = I`, `B^T B` is diagonal and nonincreasing, and the first
/// nonzero entry of each loading column is positive. The factor mean is
/// absorbed into the intercepts, so `H B^T + 1 mu^T` is unchanged.
pub fn apply_identifiability(params: &ModelParams) -> Result<ModelParams> {
    let n = params.n();
    let q = params.q();
    let hbar = column_means(&params.factors);
    let intercepts = &params.intercepts + &params.loadings * &hbar;
    let mut hc = params.factors.clone();
    for (k, mut col) in hc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-hbar[k]);
    }
    if q > n || q > params.p() {
        return Err(Error::RankDeficient);
    }
    let mut svd = product_svd(&hc, &params.loadings)?;
    let d = &svd.singular_values;
    if !(d[0] > 0.0) || d[q - 1] <= d[0] * 1e-12 {
        return Err(Error::RankDeficient);
    }
    svd.fix_signs();
    let sqrt_n = (n as f64).sqrt();
    Ok(ModelParams {
        loadings: &svd.v * DMatrix::from_diagonal(&svd.singular_values) / sqrt_n,
        intercepts,
        factors: &svd.u * sqrt_n,
        variances: params.variances.clone(),
    })
}

/// Mutable state of a running fit, advanced one EM iteration at a time.
#[derive(Debug, Clone)]
pub struct FitState<'a> {
    ds: &'a Dataset,
    config: FitConfig,
    params: ModelParams,
    variational: VariationalParams,
    elbo: f64,
    overflow_events: u64,
}

impl<'a> FitState<'a> {
    pub fn new(ds: &'a Dataset, config: &FitConfig) -> Result<Self> {
        config.check(ds.n(), ds.p())?;
        let (params, variational) = initialize(ds, config.q)?;
        Ok(Self::from_parts(ds, config, params, variational))
    }

    pub fn from_parts(
        ds: &'a Dataset,
        config: &FitConfig,
        params: ModelParams,
        variational: VariationalParams,
    ) -> Self {
        let elbo = evaluate_elbo(ds, &params, &variational, config);
        FitState {
            ds,
            config: config.clone(),
            params,
            variational,
            elbo,
            overflow_events: 0,
        }
    }

    /// One E-step, one M-step, and the resulting ELBO.
    pub fn step(&mut self) -> Result<f64> {
        let e = e_step(self.ds, &self.params, &self.variational, &self.config);
        self.overflow_events += e.overflow_events;
        self.variational = e.variational;
        self.params = m_step(self.ds, &self.params, &self.variational, &self.config)?;
        self.elbo = evaluate_elbo(self.ds, &self.params, &self.variational, &self.config);
        Ok(self.elbo)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn variational(&self) -> &VariationalParams {
        &self.variational
    }

    pub fn elbo(&self) -> f64 {
        self.elbo
    }

    pub fn overflow_events(&self) -> u64 {
        self.overflow_events
    }

    fn run(mut self) -> Result<FitResult> {
        let mut trace = vec![self.elbo];
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..self.config.max_iter {
            let prev = self.elbo;
            let cur = self.step()?;
            iterations += 1;
            trace.push(cur);
            if !cur.is_finite() {
                break;
            }
            let denom = if prev != 0.0 { prev.abs() } else { 1.0 };
            if (cur - prev).abs() / denom < self.config.eps_elbo {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            params: apply_identifiability(&self.params)?,
            variational: self.variational,
            elbo_trace: trace,
            iterations,
            converged,
            overflow_events: self.overflow_events,
        })
    }
}

/// Fit the model by variational EM.
pub fn fit(ds: &Dataset, config: &FitConfig) -> Result<FitResult> {
    let mut best = FitState::new(ds, config)?.run()?;
    if config.restarts == 0 {
        return Ok(best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0));
    let (params0, var0) = initialize(ds, config.q)?;
    for _ in 0..config.restarts {
        let mut params = params0.clone();
        params
            .factors
            .apply(|h| *h += 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let candidate = FitState::from_parts(ds, config, params, var0.clone()).run()?;
        let score = |r: &FitResult| r.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        if score(&candidate) > score(&best) {
            best = candidate;
        }
    }
    Ok(best)
}
