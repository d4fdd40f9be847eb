//! Variational E-step: one closed-form Laplace-Taylor update per count or
//! binomial site.
//!
//! Each site update is a single Newton step on the log posterior kernel
//! `f(y) = log p(x | y) - (y - z)^2 / (2 lambda)` expanded around the previous
//! posterior mean, followed by the Laplace variance `-1 / f''` at the new mean.
//!
//! The Laplace point is not the ELBO maximizer, so a raw update can lower the
//! bound. With `FitConfig::guard_estep` set, a proposal that lowers its site's
//! ELBO term is pulled back toward the previous values by step halving, and
//! the previous values are kept if no halving helps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{Dataset, FitConfig, LatentFamily, ModelParams, VariationalParams};
use crate::elbo::site_term;
use crate::linalg::{clamped_exp, sigmoid};

/// Step halvings tried before a guarded site keeps its previous values.
pub const MAX_HALVINGS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteUpdate {
    pub tau: f64,
    pub sigma2: f64,
    /// Number of exponentials that hit the clamp during this update.
    pub clamped: u32,
}

/// Count site. `ztilde` is `a_i + mu_j + b_j^T h_i`.
///
/// The expansion point is capped at `exp_clamp` before use, so a runaway
/// previous value restarts the Newton step from the cap.
pub fn poisson_site_update(
    x: f64,
    y0: f64,
    ztilde: f64,
    lambda: f64,
    exp_clamp: f64,
) -> SiteUpdate {
    let mut clamped = 0;
    let y0 = if y0 > exp_clamp {
        clamped += 1;
        exp_clamp
    } else {
        y0
    };
    let prec = 1.0 / lambda;
    let e0 = y0.exp();
    let tau = (x - e0 * (1.0 - y0) + prec * ztilde) / (prec + e0);
    let (e_tau, hit) = clamped_exp(tau, exp_clamp);
    clamped += hit as u32;
    SiteUpdate {
        tau,
        sigma2: (1.0 / (prec + e_tau)).min(lambda),
        clamped,
    }
}

/// Binomial site with `trials` trials.
pub fn binomial_site_update(x: f64, trials: u32, y0: f64, ztilde: f64, lambda: f64) -> SiteUpdate {
    let n = trials as f64;
    let prec = 1.0 / lambda;
    let g0 = sigmoid(y0);
    let w0 = n * g0 * (1.0 - g0);
    let tau = (x - n * g0 + y0 * w0 + prec * ztilde) / (prec + w0);
    let g = sigmoid(tau);
    SiteUpdate {
        tau,
        sigma2: (1.0 / (prec + n * g * (1.0 - g))).min(lambda),
        clamped: 0,
    }
}

/// Derivative of the count-site log posterior kernel.
pub fn poisson_score(x: f64, y: f64, ztilde: f64, lambda: f64) -> f64 {
    x - y.exp() - (y - ztilde) / lambda
}

/// Derivative of the binomial-site log posterior kernel.
pub fn binomial_score(x: f64, trials: u32, y: f64, ztilde: f64, lambda: f64) -> f64 {
    let n = trials as f64;
    (x - n) + n * (1.0 - sigmoid(y)) - (y - ztilde) / lambda
}

/// `a_i + mu_j + b_j^T h_i` for every row of column `j`.
pub(crate) fn column_predictor(
    params: &ModelParams,
    offsets: &DVector<f64>,
    j: usize,
) -> DVector<f64> {
    let b = params.loadings.row(j).transpose();
    let mut z = &params.factors * b;
    let mu = params.intercepts[j];
    for (zi, a) in z.iter_mut().zip(offsets.iter()) {
        *zi += a + mu;
    }
    z
}

#[derive(Debug, Clone)]
pub struct EStepOutput {
    pub variational: VariationalParams,
    pub overflow_events: u64,
}

/// Largest step from `old` toward `new`, among `1, 1/2, 1/4, ...`, that does
/// not lower `site`; `old` when none does.
fn guarded(site: impl Fn(f64, f64) -> f64, old: (f64, f64), new: (f64, f64)) -> (f64, f64) {
    let base = site(old.0, old.1);
    if !base.is_finite() || site(new.0, new.1) >= base {
        return new;
    }
    let mut step = 1.0;
    for _ in 0..MAX_HALVINGS {
        step *= 0.5;
        let cand = (
            old.0 + step * (new.0 - old.0),
            old.1 + step * (new.1 - old.1),
        );
        if site(cand.0, cand.1) >= base {
            return cand;
        }
    }
    old
}

/// Update every count and binomial site, expanding around the previous
/// posterior means. Continuous columns carry no variational parameters.
pub fn e_step(
    ds: &Dataset,
    params: &ModelParams,
    prev: &VariationalParams,
    config: &FitConfig,
) -> EStepOutput {
    let n = ds.n();
    let latent = ds.latent();
    if latent.is_empty() {
        return EStepOutput {
            variational: prev.clone(),
            overflow_events: 0,
        };
    }
    let x = ds.x();
    let columns: Vec<(Vec<f64>, Vec<f64>, u64)> = latent
        .par_iter()
        .enumerate()
        .map(|(k, lc)| {
            let z = column_predictor(params, ds.offsets(), lc.col);
            let lambda = params.variances[lc.col];
            let mut tau = Vec::with_capacity(n);
            let mut sigma2 = Vec::with_capacity(n);
            let mut overflow = 0u64;
            for i in 0..n {
                let y0 = prev.tau[(i, k)];
                let xi = x[(i, lc.col)];
                let upd = match lc.family {
                    LatentFamily::Poisson => {
                        poisson_site_update(xi, y0, z[i], lambda, config.exp_clamp)
                    }
                    LatentFamily::Binomial { trials } => {
                        binomial_site_update(xi, trials, y0, z[i], lambda)
                    }
                };
                overflow += upd.clamped as u64;
                let (t, s2) = if config.guard_estep {
                    let site = |t: f64, s2: f64| {
                        site_term(lc.family, xi, t, s2, z[i], lambda, config.exp_clamp)
                    };
                    guarded(site, (y0, prev.sigma2[(i, k)]), (upd.tau, upd.sigma2))
                } else {
                    (upd.tau, upd.sigma2)
                };
                tau.push(t);
                sigma2.push(s2);
            }
            (tau, sigma2, overflow)
        })
        .collect();

    let m = latent.len();
    let mut tau = DMatrix::zeros(n, m);
    let mut sigma2 = DMatrix::zeros(n, m);
    let mut overflow_events = 0;
    for (k, (t, s, o)) in columns.into_iter().enumerate() {
        tau.column_mut(k).copy_from_slice(&t);
        sigma2.column_mut(k).copy_from_slice(&s);
        overflow_events += o;
    }
    EStepOutput {
        variational: VariationalParams { tau, sigma2 },
        overflow_events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_fixed_point_at_matching_mean() {
        let u = poisson_site_update(1.0, 0.0, 0.0, 1.0, 80.0);
        assert_eq!(u.tau, 0.0);
        assert_eq!(u.sigma2, 0.5);
        assert_eq!(u.clamped, 0);
    }

    #[test]
    fn poisson_direct_evaluation() {
        let u = poisson_site_update(5.0, 1.0, 0.5, 2.0, 80.0);
        let e = std::f64::consts::E;
        let tau = 5.25 / (0.5 + e);
        assert_relative_eq!(u.tau, tau, epsilon = 1e-14);
        assert_relative_eq!(u.tau, 1.6313, epsilon = 1e-4);
        assert_relative_eq!(u.sigma2, 1.0 / (0.5 + tau.exp()), epsilon = 1e-14);
        assert_relative_eq!(u.sigma2, 0.178, epsilon = 1e-3);
    }

    #[test]
    fn binomial_fixed_point_at_matching_mean() {
        let u = binomial_site_update(1.0, 2, 0.0, 0.0, 1.0);
        assert_eq!(u.tau, 0.0);
        assert_relative_eq!(u.sigma2, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn binomial_direct_evaluation() {
        let u = binomial_site_update(0.0, 1, 0.0, 0.0, 1.0);
        assert_relative_eq!(u.tau, -0.4, epsilon = 1e-15);
        let g = 1.0 / (1.0 + 0.4f64.exp());
        assert_relative_eq!(u.sigma2, 1.0 / (1.0 + g * (1.0 - g)), epsilon = 1e-15);
        assert_relative_eq!(u.sigma2, 0.806, epsilon = 1e-3);
    }

    #[test]
    fn runaway_expansion_point_is_clamped() {
        let u = poisson_site_update(3.0, 500.0, 0.0, 1.0, 80.0);
        assert!(u.clamped >= 1);
        assert!(u.tau.is_finite() && u.tau <= 80.0);
        assert!(u.sigma2 > 0.0 && u.sigma2 <= 1.0);
    }

    #[test]
    fn variance_is_positive_and_below_lambda() {
        for &(x, y0, z, l) in &[
            (0.0, -30.0, -5.0, 0.01),
            (1e5, 11.0, 2.0, 4.0),
            (2.0, 0.3, 0.1, 1e-8),
        ] {
            let u = poisson_site_update(x, y0, z, l, 80.0);
            assert!(u.sigma2 > 0.0 && u.sigma2 <= l, "{u:?}");
        }
        for &(x, n, y0, z, l) in &[(0.0, 1, -40.0, 0.0, 2.0), (5.0, 5, 40.0, 3.0, 0.5)] {
            let u = binomial_site_update(x, n, y0, z, l);
            assert!(u.sigma2 > 0.0 && u.sigma2 <= l, "{u:?}");
        }
    }

    #[test]
    fn guard_takes_improving_steps_whole() {
        let site = |t: f64, _s: f64| -(t - 1.0) * (t - 1.0);
        assert_eq!(guarded(site, (0.0, 1.0), (1.0, 0.5)), (1.0, 0.5));
    }

    #[test]
    fn guard_halves_an_overshoot() {
        // from 0 toward 6 with the optimum at 1: full and half steps lose, a quarter wins
        let site = |t: f64, _s: f64| -(t - 1.0) * (t - 1.0);
        assert_eq!(guarded(site, (0.0, 1.0), (6.0, 0.2)), (1.5, 0.8));
    }

    #[test]
    fn guard_keeps_old_values_when_every_step_loses() {
        let site = |t: f64, _s: f64| -t * t;
        assert_eq!(guarded(site, (0.0, 1.0), (2.0, 0.5)), (0.0, 1.0));
    }

    #[test]
    fn guard_stops_a_binomial_two_cycle() {
        // plain Newton from ztilde = 3 alternates between 3 and about -14
        let (x, n, z, l) = (0.0, 20, 3.0, 5.0);
        let site =
            |t: f64, s2: f64| site_term(LatentFamily::Binomial { trials: n }, x, t, s2, z, l, 80.0);
        let (mut t, mut s2) = (z, 1.0);
        for _ in 0..200 {
            let u = binomial_site_update(x, n, t, z, l);
            let next = guarded(site, (t, s2), (u.tau, u.sigma2));
            assert!(site(next.0, next.1) >= site(t, s2));
            (t, s2) = next;
        }
        assert!(binomial_score(x, n, t, z, l).abs() < 0.1, "tau = {t}");
    }
}
