//! Overdispersed generalized factor model for high-dimensional mixed-type
//! data.
//!
//! Columns may be continuous, counts, or binomial. Each observation is driven
//! by a latent linear predictor `a_i + mu_j + b_j^T h_i + e_ij`, where the
//! Gaussian error `e_ij ~ N(0, lambda_j)` absorbs variation the factors do
//! not explain. Fitting uses variational EM with closed-form Laplace-Taylor
//! E-step updates and block-coordinate M-step updates.
//!
//! ```no_run
//! use overgfm::{fit, generate_dataset, FitConfig, SimSpec};
//!
//! let sim = generate_dataset(&SimSpec::scenario1(300, 300, 0.5, 7)).unwrap();
//! let result = fit(&sim.dataset, &FitConfig::new(6)).unwrap();
//! println!("converged after {} iterations", result.iterations);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod elbo;
pub mod error;
pub mod estep;
pub mod fit;
pub mod linalg;
pub mod metrics;
pub mod mstep;
pub mod selectq;
pub mod simulate;

pub use data::{
    validate, Column, Dataset, FitConfig, FitResult, MixedDataMatrix, ModelParams, VariableKind,
    VariableSchema, VariationalParams,
};
pub use elbo::evaluate_elbo;
pub use error::{Error, Result};
pub use estep::{binomial_site_update, e_step, poisson_site_update};
pub use fit::{apply_identifiability, fit, initialize, FitState};
pub use metrics::{fit_lfm, trace_statistic, trace_statistic_upsilon};
pub use mstep::m_step;
pub use selectq::{select_num_factors, singular_value_ratios, SvrReport};
pub use simulate::{generate_dataset, vmr, NoiseKind, SimSpec, SimulatedDataset};
