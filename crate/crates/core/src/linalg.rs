//! Small dense linear-algebra and scalar helpers shared by the fitting code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Logistic mean function, evaluated without overflow for large `|y|`.
#[inline]
pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^{-y})`.
#[inline]
pub fn log1p_exp_neg(y: f64) -> f64 {
    if y >= 0.0 {
        (-y).exp().ln_1p()
    } else {
        -y + y.exp().ln_1p()
    }
}

/// `e^arg` with `arg` capped at `clamp`. The flag reports whether the cap engaged.
#[inline]
pub fn clamped_exp(arg: f64, clamp: f64) -> (f64, bool) {
    if arg > clamp {
        (clamp.exp(), true)
    } else {
        (arg.exp(), false)
    }
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let chol = sym.cholesky()?;
    let l = chol.l_dirty();
    let diag = l.diagonal();
    if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return None;
    }
    // condition number of `m` above ~1e20 is treated as singular
    if diag.min() <= diag.max() * 1e-10 {
        return None;
    }
    Some(chol.inverse())
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Leading `rank` singular triplets, ordered by decreasing singular value.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    /// Flip each singular pair so the first entry of `v` that is not exactly
    /// zero is positive. The product `u diag(d) v^T` is unchanged.
    pub fn fix_signs(&mut self) {
        for k in 0..self.v.ncols() {
            let lead = self.v.column(k).iter().copied().find(|&x| x != 0.0);
            if matches!(lead, Some(x) if x < 0.0) {
                self.v.column_mut(k).neg_mut();
                self.u.column_mut(k).neg_mut();
            }
        }
    }
}

/// Rank-`rank` SVD of a dense matrix. Equal singular values keep the order
/// returned by the decomposition.
pub fn truncated_svd(x: &DMatrix<f64>, rank: usize) -> Result<TruncatedSvd> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Svd("input contains non-finite values".into()));
    }
    let max_rank = x.nrows().min(x.ncols());
    if rank == 0 || rank > max_rank {
        return Err(Error::Svd(format!("rank {rank} outside 1..={max_rank}")));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Svd("U not computed".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Svd("V^T not computed".into()))?;
    let d = svd.singular_values;

    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    order.truncate(rank);

    let u = DMatrix::from_fn(u.nrows(), rank, |i, k| u[(i, order[k])]);
    let v = DMatrix::from_fn(vt.ncols(), rank, |j, k| vt[(order[k], j)]);
    let singular_values = DVector::from_fn(rank, |k, _| d[order[k]]);
    Ok(TruncatedSvd {
        u,
        singular_values,
        v,
    })
}

/// SVD of the product `left * right^T` without forming it. `left` is n x q and
/// `right` is p x q; the result has rank q.
pub fn product_svd(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<TruncatedSvd> {
    let q = left.ncols();
    if right.ncols() != q || q > left.nrows() || q > right.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "product_svd: left {}x{}, right {}x{}",
            left.nrows(),
            left.ncols(),
            right.nrows(),
            right.ncols()
        )));
    }
    let qr_left = left.clone().qr();
    let qr_right = right.clone().qr();
    let core = qr_left.r() * qr_right.r().transpose();
    let inner = truncated_svd(&core, q)?;
    Ok(TruncatedSvd {
        u: qr_left.q() * inner.u,
        singular_values: inner.singular_values,
        v: qr_right.q() * inner.v,
    })
}

/// Orthonormal basis of the column space of `a` (thin QR), failing when the
/// columns are numerically dependent.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() > a.nrows() {
        return Err(Error::RankDeficient);
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let tol = scale * 1e-12 * a.nrows().max(a.ncols()) as f64;
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= tol) {
        return Err(Error::RankDeficient);
    }
    Ok(qr.q())
}
