//! Seeded generators for synthetic mixed-type data with known factors.
//!
//! Random draws come from ChaCha8 with one stream per component, so each
//! matrix depends only on the seed and its own stream:
//!
//! | stream | component                         |
//! |--------|-----------------------------------|
//! | 0      | raw loadings                      |
//! | 1      | raw factor scores                 |
//! | 2      | intercepts                        |
//! | 3      | overdispersion noise              |
//! | 4      | observations given the predictor  |
//! | 5      | t mixing weights (one per row)    |
//!
//! Within a stream, draws are taken row by row.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{validate, Column, Dataset, MixedDataMatrix, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, sigmoid, truncated_svd};

/// Largest Poisson mean the generator will sample from.
pub const MAX_POISSON_MEAN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    Gaussian,
    /// Row-wise multivariate t with scale `sigma2 * I`.
    StudentT {
        df: f64,
    },
}

/// A contiguous run of columns of one kind with its signal strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeBlock {
    pub kind: VariableKind,
    pub count: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub q: usize,
    pub blocks: Vec<TypeBlock>,
    pub sigma2: f64,
    pub noise: NoiseKind,
    pub mu_scale: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn p(&self) -> usize {
        self.blocks.iter().map(|b| b.count).sum()
    }

    /// Continuous, count and binary columns split `floor(p/3)`, `floor(p/3)`
    /// and the remainder.
    pub fn three_types(
        n: usize,
        p: usize,
        q: usize,
        rho: [f64; 3],
        sigma2: f64,
        seed: u64,
    ) -> Self {
        let third = p / 3;
        SimSpec {
            n,
            q,
            blocks: vec![
                TypeBlock {
                    kind: VariableKind::Continuous,
                    count: third,
                    rho: rho[0],
                },
                TypeBlock {
                    kind: VariableKind::Count,
                    count: third,
                    rho: rho[1],
                },
                TypeBlock {
                    kind: VariableKind::Binomial { trials: 1 },
                    count: p - 2 * third,
                    rho: rho[2],
                },
            ],
            sigma2,
            noise: NoiseKind::Gaussian,
            mu_scale: 0.4,
            seed,
        }
    }

    /// Two kinds split `floor(p/2)` and the remainder.
    pub fn two_types(
        n: usize,
        p: usize,
        q: usize,
        kinds: [(VariableKind, f64); 2],
        sigma2: f64,
        seed: u64,
    ) -> Self {
        let half = p / 2;
        SimSpec {
            n,
            q,
            blocks: vec![
                TypeBlock {
                    kind: kinds[0].0,
                    count: half,
                    rho: kinds[0].1,
                },
                TypeBlock {
                    kind: kinds[1].0,
                    count: p - half,
                    rho: kinds[1].1,
                },
            ],
            sigma2,
            noise: NoiseKind::Gaussian,
            mu_scale: 0.4,
            seed,
        }
    }

    pub fn single_type(
        n: usize,
        p: usize,
        q: usize,
        kind: VariableKind,
        rho: f64,
        sigma2: f64,
        seed: u64,
    ) -> Self {
        SimSpec {
            n,
            q,
            blocks: vec![TypeBlock {
                kind,
                count: p,
                rho,
            }],
            sigma2,
            noise: NoiseKind::Gaussian,
            mu_scale: 0.4,
            seed,
        }
    }

    /// Default three-type design: `rho = (0.05, 0.2, 0.1)`, six factors.
    pub fn scenario1(n: usize, p: usize, sigma2: f64, seed: u64) -> Self {
        SimSpec::three_types(n, p, 6, [0.05, 0.2, 0.1], sigma2, seed)
    }

    /// 300 x 300 all-continuous design with `rho = 0.2`.
    pub fn scenario8_gaussian(sigma2: f64, seed: u64) -> Self {
        SimSpec::single_type(300, 300, 6, VariableKind::Continuous, 0.2, sigma2, seed)
    }

    /// 300 x 300 all-count design with `rho = 0.3`.
    pub fn scenario8_poisson(sigma2: f64, seed: u64) -> Self {
        SimSpec::single_type(300, 300, 6, VariableKind::Count, 0.3, sigma2, seed)
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn schema(&self) -> Result<VariableSchema> {
        let mut cols = Vec::with_capacity(self.p());
        for b in &self.blocks {
            for _ in 0..b.count {
                cols.push(Column::new(format!("V{}", cols.len() + 1), b.kind));
            }
        }
        VariableSchema::new(cols)
    }

    fn check(&self) -> Result<()> {
        let p = self.p();
        if self.q == 0 || self.q >= self.n.min(p) {
            return Err(Error::InvalidConfig(format!(
                "q = {} must be in 1..min(n, p) = {}",
                self.q,
                self.n.min(p)
            )));
        }
        if self
            .blocks
            .iter()
            .any(|b| !(b.rho > 0.0 && b.rho.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "signal strengths must be positive".into(),
            ));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidConfig("sigma2 must be nonnegative".into()));
        }
        if let NoiseKind::StudentT { df } = self.noise {
            if !(df > 0.0) {
                return Err(Error::InvalidConfig(
                    "t degrees of freedom must be positive".into(),
                ));
            }
        }
        if !self.mu_scale.is_finite() {
            return Err(Error::InvalidConfig("mu_scale must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    pub h0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub mu0: DVector<f64>,
    /// Latent linear predictors including the overdispersion noise.
    pub y0: DMatrix<f64>,
    /// Type-scaled raw loadings before rotation.
    pub b_bar: DMatrix<f64>,
    /// Centered, orthonormalized raw factor scores.
    pub h_bar: DMatrix<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for k in 0..cols {
            m[(i, k)] = StandardNormal.sample(rng);
        }
    }
    m
}

pub fn generate_dataset(spec: &SimSpec) -> Result<SimulatedDataset> {
    spec.check()?;
    let (n, p, q) = (spec.n, spec.p(), spec.q);
    let schema = spec.schema()?;

    // loadings: row blocks scaled by type, then rotated to orthogonal columns
    let mut b_bar = normal_matrix(p, q, &mut stream(spec.seed, 0));
    let mut row = 0;
    for block in &spec.blocks {
        for _ in 0..block.count {
            b_bar.row_mut(row).scale_mut(block.rho);
            row += 1;
        }
    }
    let mut svd = truncated_svd(&b_bar, q)?;
    for k in 0..q {
        let lead = svd.u.column(k).iter().copied().find(|&v| v != 0.0);
        if matches!(lead, Some(v) if v < 0.0) {
            svd.u.column_mut(k).neg_mut();
            svd.v.column_mut(k).neg_mut();
        }
    }
    let b0 = &svd.u * DMatrix::from_diagonal(&svd.singular_values);
    let rotation = svd.v;

    // factor scores with AR(1)-type correlation 0.5^|k-l|
    let sigma = DMatrix::from_fn(q, q, |k, l| 0.5f64.powi((k as i32 - l as i32).abs()));
    let chol = sigma
        .cholesky()
        .expect("AR(1) covariance is positive definite");
    let z = normal_matrix(n, q, &mut stream(spec.seed, 1));
    let mut h_raw = z * chol.l().transpose();
    for mut col in h_raw.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let h_bar = orthonormal_basis(&h_raw)?;
    // H0 B0^T = sqrt(n) H_bar B_bar^T
    let h0 = &h_bar * rotation * (n as f64).sqrt();

    let mut mu_rng = stream(spec.seed, 2);
    let mu0 = DVector::from_fn(p, |_, _| {
        spec.mu_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut mu_rng)
    });

    let mut y0 = &h0 * b0.transpose();
    for (j, mut col) in y0.column_iter_mut().enumerate() {
        col.add_scalar_mut(mu0[j]);
    }
    if spec.sigma2 > 0.0 {
        let scale = spec.sigma2.sqrt();
        let mut eps = normal_matrix(n, p, &mut stream(spec.seed, 3));
        if let NoiseKind::StudentT { df } = spec.noise {
            let chi = ChiSquared::new(df).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut mix_rng = stream(spec.seed, 5);
            for i in 0..n {
                let w: f64 = chi.sample(&mut mix_rng);
                eps.row_mut(i).scale_mut((df / w).sqrt());
            }
        }
        y0 += eps * scale;
    }

    let mut obs_rng = stream(spec.seed, 4);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let y = y0[(i, j)];
            x[(i, j)] = match schema.kind(j) {
                VariableKind::Continuous => y,
                VariableKind::Count => {
                    let mean = y.exp();
                    if !(mean <= MAX_POISSON_MEAN) {
                        return Err(Error::PoissonOverflow {
                            row: i,
                            col: j,
                            eta: y,
                        });
                    }
                    if mean > 0.0 {
                        Poisson::new(mean)
                            .map_err(|e| Error::InvalidConfig(e.to_string()))?
                            .sample(&mut obs_rng)
                    } else {
                        0.0
                    }
                }
                VariableKind::Binomial { trials } => Binomial::new(trials as u64, sigmoid(y))
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?
                    .sample(&mut obs_rng)
                    as f64,
            };
        }
    }

    let dataset = validate(MixedDataMatrix::new(x), schema)?;
    Ok(SimulatedDataset {
        dataset,
        h0,
        b0,
        mu0,
        y0,
        b_bar,
        h_bar,
    })
}

/// Variance-to-mean ratio of a count column (sample variance with `n - 1`).
pub fn vmr(column: &[f64]) -> Result<f64> {
    let n = column.len();
    if n < 2 {
        return Err(Error::DimensionMismatch("need at least two values".into()));
    }
    let mean = column.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(var / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::column_means;

    #[test]
    fn ground_truth_satisfies_identifiability() {
        for seed in 0..3 {
            let sim =
                generate_dataset(&SimSpec::three_types(40, 30, 3, [0.5, 0.3, 0.4], 0.2, seed))
                    .unwrap();
            let n = 40.0;
            assert!(column_means(&sim.h0).amax() < 1e-10);
            let gram = sim.h0.tr_mul(&sim.h0) / n;
            assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
            let btb = sim.b0.tr_mul(&sim.b0);
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        assert!(btb[(a, b)].abs() < 1e-10);
                    }
                }
            }
            assert!(btb[(0, 0)] >= btb[(1, 1)] && btb[(1, 1)] >= btb[(2, 2)]);
            for k in 0..3 {
                let lead = sim
                    .b0
                    .column(k)
                    .iter()
                    .copied()
                    .find(|v| *v != 0.0)
                    .unwrap();
                assert!(lead > 0.0);
            }
        }
    }

    #[test]
    fn rotation_preserves_the_product() {
        let sim =
            generate_dataset(&SimSpec::three_types(30, 15, 3, [0.5, 0.3, 0.4], 0.0, 2)).unwrap();
        let lhs = &sim.h0 * sim.b0.transpose();
        let rhs = &sim.h_bar * sim.b_bar.transpose() * 30f64.sqrt();
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn schema_follows_thirds_split() {
        let spec = SimSpec::scenario1(20, 10, 0.3, 1);
        let s = spec.schema().unwrap();
        assert_eq!(s.continuous_indices().len(), 3);
        assert_eq!(s.count_indices().len(), 3);
        assert_eq!(s.binomial_indices().len(), 4);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SimSpec::three_types(25, 12, 2, [0.5, 0.3, 0.4], 0.5, 9);
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.h0, b.h0);
        let c = generate_dataset(&SimSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn noiseless_latent_predictor_has_rank_q_after_centering() {
        let spec = SimSpec::single_type(30, 20, 3, VariableKind::Continuous, 1.0, 0.0, 4);
        let sim = generate_dataset(&spec).unwrap();
        let mut y = sim.y0.clone();
        for mut col in y.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let sv = y.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[3] < 1e-10 * sv[0]);
        assert!(sv[2] > 1e-3 * sv[0]);
    }

    #[test]
    fn overflow_is_reported() {
        let spec = SimSpec::single_type(20, 10, 2, VariableKind::Count, 40.0, 0.0, 1);
        match generate_dataset(&spec) {
            Err(Error::PoissonOverflow { .. }) => {}
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn vmr_edge_cases() {
        assert_eq!(vmr(&[3.0; 10]).unwrap(), 0.0);
        assert!(matches!(vmr(&[0.0; 5]), Err(Error::ZeroMean)));
        let v = vmr(&[0.0, 2.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }
}
