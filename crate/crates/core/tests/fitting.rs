use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use overgfm::data::LatentFamily;
use overgfm::mstep::{
    effective_response, update_factors, update_intercepts, update_loadings, update_variances,
};
use overgfm::selectq::SvrReport;
use overgfm::simulate::TypeBlock;
use overgfm::{
    binomial_site_update, e_step, evaluate_elbo, fit, generate_dataset, poisson_site_update,
    select_num_factors, vmr, Dataset, FitConfig, ModelParams, NoiseKind, SimSpec, VariableKind,
    VariationalParams,
};

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn mixed_spec(n: usize, p: usize, q: usize, sigma2: f64, seed: u64) -> SimSpec {
    let third = p / 3;
    SimSpec {
        n,
        q,
        blocks: vec![
            TypeBlock {
                kind: VariableKind::Continuous,
                count: third,
                rho: 0.3,
            },
            TypeBlock {
                kind: VariableKind::Count,
                count: third,
                rho: 0.3,
            },
            TypeBlock {
                kind: VariableKind::Binomial { trials: 3 },
                count: p - 2 * third,
                rho: 0.4,
            },
        ],
        sigma2,
        noise: NoiseKind::Gaussian,
        mu_scale: 0.4,
        seed,
    }
}

/// A random (not fitted) state on a simulated mixed dataset.
fn random_state(seed: u64) -> (Dataset, ModelParams, VariationalParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = generate_dataset(&mixed_spec(40, 15, 2, 0.5, seed)).unwrap();
    let ds = sim.dataset;
    let (n, p, m) = (ds.n(), ds.p(), ds.latent().len());
    let params = ModelParams {
        loadings: normal_matrix(p, 2, &mut rng) * 0.5,
        intercepts: DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)),
        factors: normal_matrix(n, 2, &mut rng),
        variances: DVector::from_fn(p, |_, _| rng.random_range(0.1..2.0)),
    };
    let var = VariationalParams {
        tau: normal_matrix(n, m, &mut rng),
        sigma2: DMatrix::from_fn(n, m, |_, _| rng.random_range(0.05..1.0)),
    };
    (ds, params, var)
}

#[test]
fn elbo_trace_never_decreases_on_mixed_data() {
    for seed in 0..8 {
        let sim = generate_dataset(&mixed_spec(120, 60, 3, 1.0, seed)).unwrap();
        let res = fit(&sim.dataset, &FitConfig::new(3)).unwrap();
        for w in res.elbo_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-10 * w[0].abs(),
                "seed {seed}: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert_eq!(res.elbo_trace.len(), res.iterations + 1);
    }
}

#[test]
fn default_design_converges_within_sixty_iterations() {
    let sim = generate_dataset(&SimSpec::scenario1(300, 300, 0.5, 3)).unwrap();
    let res = fit(&sim.dataset, &FitConfig::new(6)).unwrap();
    assert!(res.converged);
    assert!(res.iterations <= 60, "{} iterations", res.iterations);
}

#[test]
fn fit_is_bitwise_identical_across_thread_counts() {
    let sim = generate_dataset(&mixed_spec(80, 40, 2, 0.5, 11)).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| fit(&sim.dataset, &FitConfig::new(2)).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.elbo_trace, b.elbo_trace);
    assert_eq!(a.params, b.params);
    assert_eq!(a.variational, b.variational);
}

#[test]
fn unguarded_e_step_matches_sequential_site_updates() {
    let (ds, params, var) = random_state(21);
    let mut cfg = FitConfig::new(2);
    cfg.guard_estep = false;
    let out = e_step(&ds, &params, &var, &cfg).variational;
    let z = params.linear_predictor();
    for (k, lc) in ds.latent().iter().enumerate() {
        let lambda = params.variances[lc.col];
        for i in 0..ds.n() {
            let x = ds.x()[(i, lc.col)];
            let expected = match lc.family {
                LatentFamily::Poisson => {
                    poisson_site_update(x, var.tau[(i, k)], z[(i, lc.col)], lambda, 80.0)
                }
                LatentFamily::Binomial { trials } => {
                    binomial_site_update(x, trials, var.tau[(i, k)], z[(i, lc.col)], lambda)
                }
            };
            assert_eq!(out.tau[(i, k)], expected.tau);
            assert_eq!(out.sigma2[(i, k)], expected.sigma2);
        }
    }
}

#[test]
fn guarded_e_step_never_lowers_the_elbo() {
    let cfg = FitConfig::new(2);
    for seed in 0..20 {
        let (ds, params, var) = random_state(100 + seed);
        let before = evaluate_elbo(&ds, &params, &var, &cfg);
        let after = evaluate_elbo(
            &ds,
            &params,
            &e_step(&ds, &params, &var, &cfg).variational,
            &cfg,
        );
        assert!(
            after >= before - 1e-10 * before.abs(),
            "seed {seed}: {before} -> {after}"
        );
    }
}

#[test]
fn e_step_is_identical_across_thread_counts() {
    let (ds, params, var) = random_state(5);
    let cfg = FitConfig::new(2);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| e_step(&ds, &params, &var, &cfg).variational)
    };
    assert_eq!(run(1), run(3));
}

/// Least squares through nalgebra's SVD solver, independent of the normal
/// equations used by the updates.
fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().svd(true, true).solve(b, 1e-14).unwrap()
}

#[test]
fn loading_update_matches_column_least_squares() {
    let (ds, params, var) = random_state(31);
    let eff = effective_response(&ds, &var);
    let b = update_loadings(&params.factors, &eff.xbar, &params.intercepts).unwrap();
    let mut r = eff.xbar.clone();
    for (j, mut c) in r.column_iter_mut().enumerate() {
        c.add_scalar_mut(-params.intercepts[j]);
    }
    let oracle = lstsq(&params.factors, &r).transpose();
    assert!((b - oracle).amax() < 1e-9);
}

#[test]
fn factor_update_matches_weighted_row_least_squares() {
    let (ds, params, var) = random_state(32);
    let eff = effective_response(&ds, &var);
    let h = update_factors(
        &params.loadings,
        &params.variances,
        &eff.xbar,
        &params.intercepts,
    )
    .unwrap();
    let w = params.variances.map(|l| 1.0 / l.sqrt());
    let a = DMatrix::from_fn(ds.p(), params.loadings.ncols(), |j, k| {
        params.loadings[(j, k)] * w[j]
    });
    for i in 0..ds.n() {
        let rhs = DMatrix::from_fn(ds.p(), 1, |j, _| {
            (eff.xbar[(i, j)] - params.intercepts[j]) * w[j]
        });
        let oracle = lstsq(&a, &rhs);
        for k in 0..h.ncols() {
            assert!((h[(i, k)] - oracle[(k, 0)]).abs() < 1e-9);
        }
    }
}

/// Central difference of the ELBO along one coordinate of a parameter block.
fn partial(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

#[test]
fn intercept_and_variance_updates_are_stationary_points() {
    let (ds, params, var) = random_state(33);
    let cfg = FitConfig::new(2);
    let eff = effective_response(&ds, &var);
    let mu = update_intercepts(&params.loadings, &params.factors, &eff.xbar);
    let at_mu = ModelParams {
        intercepts: mu.clone(),
        ..params.clone()
    };
    for j in [0, 7, 14] {
        let g = partial(
            |d| {
                let mut p = at_mu.clone();
                p.intercepts[j] += d;
                evaluate_elbo(&ds, &p, &var, &cfg)
            },
            1e-5,
        );
        assert!(g.abs() < 1e-5, "d/dmu_{j} = {g}");
    }
    let lambda = update_variances(
        &at_mu.loadings,
        &at_mu.factors,
        &mu,
        &eff.xbar,
        &eff.sigma2_full,
        1e-8,
    );
    let at_lambda = ModelParams {
        variances: lambda,
        ..at_mu
    };
    for j in [0, 7, 14] {
        let g = partial(
            |d| {
                let mut p = at_lambda.clone();
                p.variances[j] += d;
                evaluate_elbo(&ds, &p, &var, &cfg)
            },
            1e-6,
        );
        assert!(g.abs() < 1e-4, "d/dlambda_{j} = {g}");
    }
}

#[test]
fn variances_respect_the_floor() {
    let (ds, params, var) = random_state(34);
    let eff = effective_response(&ds, &var);
    let floor = 10.0;
    let lambda = update_variances(
        &params.loadings,
        &params.factors,
        &params.intercepts,
        &eff.xbar,
        &eff.sigma2_full,
        floor,
    );
    assert!(lambda.iter().all(|&l| l >= floor));
}

#[test]
fn poisson_column_means_track_the_latent_mean() {
    let spec = SimSpec::single_type(20_000, 4, 1, VariableKind::Count, 0.3, 0.5, 8);
    let sim = generate_dataset(&spec).unwrap();
    for j in 0..4 {
        let observed = sim.dataset.x().column(j).mean();
        let expected = sim.y0.column(j).map(f64::exp).mean();
        let se = (expected / 20_000.0).sqrt();
        assert!(
            (observed - expected).abs() < 5.0 * se,
            "column {j}: {observed} vs {expected}"
        );
    }
}

#[test]
fn overdispersed_counts_have_variance_above_mean() {
    let sim = generate_dataset(&SimSpec::single_type(
        400,
        30,
        2,
        VariableKind::Count,
        0.2,
        1.0,
        4,
    ))
    .unwrap();
    let ratios: Vec<f64> = (0..30)
        .map(|j| vmr(sim.dataset.x().column(j).as_slice()).unwrap())
        .collect();
    let avg = ratios.iter().sum::<f64>() / 30.0;
    assert!(avg > 1.0, "average VMR {avg}");
}

#[test]
fn noiseless_latent_predictor_has_rank_q_after_centering() {
    let sim = generate_dataset(&SimSpec::scenario1(60, 45, 0.0, 2)).unwrap();
    let mut y = sim.y0.clone();
    for mut c in y.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    let sv = y.singular_values();
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!(sorted[6] < 1e-10 * sorted[0]);
    assert!(sorted[5] > 1e-3 * sorted[0]);
}

#[test]
fn svr_report_lists_one_ratio_per_adjacent_pair() {
    let sim = generate_dataset(&mixed_spec(60, 30, 2, 0.3, 9)).unwrap();
    let report: SvrReport = select_num_factors(&sim.dataset, 5, &FitConfig::new(5)).unwrap();
    assert_eq!(report.singular_values.len(), 5);
    assert_eq!(report.ratios.len(), 4);
    assert!(report.singular_values.windows(2).all(|w| w[0] >= w[1]));
    assert!((1..=4).contains(&report.q_hat));
}
