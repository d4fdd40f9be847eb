//! Domain types shared by every stage of the fit: variable schema, the
//! observation matrix, model and variational parameters, configuration and
//! results.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariableKind {
    Continuous,
    Count,
    /// Binomial with a fixed number of trials; one trial is the binary case.
    Binomial {
        trials: u32,
    },
}

impl VariableKind {
    pub fn label(&self) -> &'static str {
        match self {
            VariableKind::Continuous => "continuous",
            VariableKind::Count => "count",
            VariableKind::Binomial { .. } => "binomial",
        }
    }

    pub fn trials(&self) -> Option<u32> {
        match self {
            VariableKind::Binomial { trials } => Some(*trials),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: VariableKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: VariableKind) -> Self {
        Column {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered list of column types. Columns of each kind form the index sets
/// used throughout the model: continuous (G1), count (G2), binomial (G3).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    columns: Vec<Column>,
}

impl VariableSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidSchema("schema has no columns".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if let VariableKind::Binomial { trials } = c.kind {
                if trials == 0 {
                    return Err(Error::InvalidSchema(format!(
                        "column '{}': trials must be at least 1",
                        c.name
                    )));
                }
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column name '{}'",
                    c.name
                )));
            }
        }
        Ok(VariableSchema { columns })
    }

    /// Schema built from kinds alone; columns are named `V1..Vp`.
    pub fn from_kinds(kinds: impl IntoIterator<Item = VariableKind>) -> Result<Self> {
        let columns = kinds
            .into_iter()
            .enumerate()
            .map(|(j, kind)| Column::new(format!("V{}", j + 1), kind))
            .collect();
        VariableSchema::new(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn kind(&self, j: usize) -> VariableKind {
        self.columns[j].kind
    }

    fn indices_where(&self, pred: impl Fn(VariableKind) -> bool) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| pred(c.kind))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        self.indices_where(|k| k == VariableKind::Continuous)
    }

    pub fn count_indices(&self) -> Vec<usize> {
        self.indices_where(|k| k == VariableKind::Count)
    }

    pub fn binomial_indices(&self) -> Vec<usize> {
        self.indices_where(|k| matches!(k, VariableKind::Binomial { .. }))
    }

    /// Count and binomial columns in schema order; the layout of the
    /// variational parameter matrices.
    pub fn latent_indices(&self) -> Vec<usize> {
        self.indices_where(|k| k != VariableKind::Continuous)
    }
}

/// Raw n x p observations plus a known per-row offset.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataMatrix {
    pub x: DMatrix<f64>,
    pub offsets: DVector<f64>,
}

impl MixedDataMatrix {
    pub fn new(x: DMatrix<f64>) -> Self {
        let offsets = DVector::zeros(x.nrows());
        MixedDataMatrix { x, offsets }
    }

    pub fn with_offsets(x: DMatrix<f64>, offsets: DVector<f64>) -> Self {
        MixedDataMatrix { x, offsets }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
}

/// Response family of a column carried by variational parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentFamily {
    Poisson,
    Binomial { trials: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentColumn {
    /// Column index in the data matrix.
    pub col: usize,
    pub family: LatentFamily,
}

/// Observations that passed [`validate`], with index sets materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: MixedDataMatrix,
    schema: VariableSchema,
    continuous: Vec<usize>,
    count: Vec<usize>,
    binomial: Vec<usize>,
    latent: Vec<LatentColumn>,
}

impl Dataset {
    pub fn data(&self) -> &MixedDataMatrix {
        &self.data
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.data.x
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.data.offsets
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn continuous(&self) -> &[usize] {
        &self.continuous
    }

    pub fn count(&self) -> &[usize] {
        &self.count
    }

    pub fn binomial(&self) -> &[usize] {
        &self.binomial
    }

    /// Count and binomial columns, in schema order.
    pub fn latent(&self) -> &[LatentColumn] {
        &self.latent
    }

    pub fn into_parts(self) -> (MixedDataMatrix, VariableSchema) {
        (self.data, self.schema)
    }
}

/// Check observations against a schema and build the index sets.
pub fn validate(data: MixedDataMatrix, schema: VariableSchema) -> Result<Dataset> {
    let (n, p) = (data.nrows(), data.ncols());
    if schema.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "schema has {} columns but data has {p}",
            schema.len()
        )));
    }
    if n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    if data.offsets.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} offsets for {n} rows",
            data.offsets.len()
        )));
    }
    for (i, a) in data.offsets.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "offset {} is not finite",
                i + 1
            )));
        }
    }
    for j in 0..p {
        let kind = schema.kind(j);
        for i in 0..n {
            let v = data.x[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            match kind {
                VariableKind::Continuous => {}
                VariableKind::Count => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::NonIntegerCount {
                            row: i,
                            col: j,
                            value: v,
                        });
                    }
                }
                VariableKind::Binomial { trials } => {
                    if v < 0.0 || v.fract() != 0.0 || v > trials as f64 {
                        return Err(Error::ExceedsTrials {
                            row: i,
                            col: j,
                            value: v,
                            trials,
                        });
                    }
                }
            }
        }
    }

    let latent = schema
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(col, c)| match c.kind {
            VariableKind::Continuous => None,
            VariableKind::Count => Some(LatentColumn {
                col,
                family: LatentFamily::Poisson,
            }),
            VariableKind::Binomial { trials } => Some(LatentColumn {
                col,
                family: LatentFamily::Binomial { trials },
            }),
        })
        .collect();

    Ok(Dataset {
        continuous: schema.continuous_indices(),
        count: schema.count_indices(),
        binomial: schema.binomial_indices(),
        latent,
        data,
        schema,
    })
}

/// Model parameters: loadings `B` (p x q), intercepts `mu` (p), factor
/// scores `H` (n x q) and per-column dispersion variances `lambda` (p).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub loadings: DMatrix<f64>,
    pub intercepts: DVector<f64>,
    pub factors: DMatrix<f64>,
    pub variances: DVector<f64>,
}

impl ModelParams {
    pub fn n(&self) -> usize {
        self.factors.nrows()
    }

    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn q(&self) -> usize {
        self.loadings.ncols()
    }

    /// `H B^T + 1 mu^T`, the fitted linear predictor without offsets.
    pub fn linear_predictor(&self) -> DMatrix<f64> {
        let mut eta = &self.factors * self.loadings.transpose();
        for (j, mut col) in eta.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.intercepts[j]);
        }
        eta
    }
}

/// Gaussian variational posterior means and variances for the latent
/// responses of count and binomial columns. Column `k` corresponds to
/// `Dataset::latent()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub tau: DMatrix<f64>,
    pub sigma2: DMatrix<f64>,
}

impl VariationalParams {
    pub fn empty(n: usize) -> Self {
        VariationalParams {
            tau: DMatrix::zeros(n, 0),
            sigma2: DMatrix::zeros(n, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of factors.
    pub q: usize,
    pub max_iter: usize,
    /// Relative ELBO change below which the fit stops.
    pub eps_elbo: f64,
    pub lambda_floor: f64,
    /// Largest exponent evaluated before clamping.
    pub exp_clamp: f64,
    pub seed: Option<u64>,
    /// Extra randomly perturbed starts; the fit with the highest final ELBO
    /// wins. Zero disables multi-start.
    pub restarts: usize,
    /// Backtrack any site update that would lower that site's ELBO term,
    /// which makes every iteration non-decreasing in the ELBO. When off, the
    /// Laplace-Taylor update is always taken as is.
    pub guard_estep: bool,
}

impl FitConfig {
    pub fn new(q: usize) -> Self {
        FitConfig {
            q,
            max_iter: 100,
            eps_elbo: 1e-4,
            lambda_floor: 1e-8,
            exp_clamp: 80.0,
            seed: None,
            restarts: 0,
            guard_estep: true,
        }
    }

    pub fn check(&self, n: usize, p: usize) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidConfig("q must be positive".into()));
        }
        if self.q >= n.min(p) {
            return Err(Error::InvalidConfig(format!(
                "q = {} must be below min(n, p) = {}",
                self.q,
                n.min(p)
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.eps_elbo > 0.0) {
            return Err(Error::InvalidConfig("eps_elbo must be positive".into()));
        }
        if !(self.lambda_floor > 0.0) {
            return Err(Error::InvalidConfig("lambda_floor must be positive".into()));
        }
        if !self.exp_clamp.is_finite() {
            return Err(Error::InvalidConfig("exp_clamp must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters after the identifiability projection.
    pub params: ModelParams,
    pub variational: VariationalParams,
    /// ELBO at initialization followed by one value per iteration.
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of exponentials whose argument hit the clamp.
    pub overflow_events: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(kinds: &[VariableKind]) -> VariableSchema {
        VariableSchema::from_kinds(kinds.iter().copied()).unwrap()
    }

    #[test]
    fn accepts_well_formed_input() {
        let x = DMatrix::from_row_slice(2, 2, &[1.5, 2.0, 0.3, 0.0]);
        let ds = validate(
            MixedDataMatrix::new(x),
            schema(&[VariableKind::Continuous, VariableKind::Count]),
        )
        .unwrap();
        assert_eq!(ds.continuous(), &[0]);
        assert_eq!(ds.count(), &[1]);
        assert!(ds.binomial().is_empty());
        assert_eq!(ds.latent().len(), 1);
    }

    #[test]
    fn rejects_non_integer_count() {
        let x = DMatrix::from_row_slice(2, 1, &[2.5, 1.0]);
        let err = validate(MixedDataMatrix::new(x), schema(&[VariableKind::Count])).unwrap_err();
        assert!(matches!(err, Error::NonIntegerCount { row: 0, col: 0, .. }));
        assert!(err.to_string().contains("non-integer count"));
    }

    #[test]
    fn rejects_binomial_above_trials() {
        let x = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let err = validate(
            MixedDataMatrix::new(x),
            schema(&[VariableKind::Binomial { trials: 1 }]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ExceedsTrials { trials: 1, .. }));
        assert!(err.to_string().contains("exceeds trials"));
    }

    #[test]
    fn rejects_non_finite_and_shape_errors() {
        let x = DMatrix::from_row_slice(2, 1, &[f64::NAN, 0.0]);
        let err =
            validate(MixedDataMatrix::new(x), schema(&[VariableKind::Continuous])).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 0 }));

        let x = DMatrix::zeros(3, 2);
        let err =
            validate(MixedDataMatrix::new(x), schema(&[VariableKind::Continuous])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));

        let x = DMatrix::zeros(1, 1);
        assert!(validate(MixedDataMatrix::new(x), schema(&[VariableKind::Continuous])).is_err());
    }

    #[test]
    fn zero_trials_and_duplicate_names_rejected() {
        assert!(VariableSchema::from_kinds([VariableKind::Binomial { trials: 0 }]).is_err());
        let cols = vec![
            Column::new("a", VariableKind::Count),
            Column::new("a", VariableKind::Continuous),
        ];
        assert!(VariableSchema::new(cols).is_err());
    }

    #[test]
    fn latent_layout_follows_schema_order() {
        let s = schema(&[
            VariableKind::Binomial { trials: 3 },
            VariableKind::Continuous,
            VariableKind::Count,
        ]);
        assert_eq!(s.latent_indices(), vec![0, 2]);
        let x = DMatrix::from_row_slice(2, 3, &[3.0, 0.1, 4.0, 0.0, -2.0, 0.0]);
        let ds = validate(MixedDataMatrix::new(x), s).unwrap();
        assert_eq!(
            ds.latent(),
            &[
                LatentColumn {
                    col: 0,
                    family: LatentFamily::Binomial { trials: 3 }
                },
                LatentColumn {
                    col: 2,
                    family: LatentFamily::Poisson
                },
            ]
        );
    }

    #[test]
    fn config_requires_q_below_min_dimension() {
        assert!(FitConfig::new(3).check(10, 3).is_err());
        assert!(FitConfig::new(2).check(10, 3).is_ok());
        assert!(FitConfig::new(0).check(10, 3).is_err());
        let mut c = FitConfig::new(1);
        c.eps_elbo = 0.0;
        assert!(c.check(10, 3).is_err());
    }
}
