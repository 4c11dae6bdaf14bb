use nalgebra::{DMatrix, QR, SVD};

use crate::error::{Error, Result};

/// Orthonormal basis of `{v : I v = 0}`.
#[derive(Debug, Clone)]
pub struct Nullspace {
    /// `q × q̃`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub rank: usize,
    /// Descending singular values of the membership matrix.
    pub singular_values: Vec<f64>,
}

impl Nullspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Rank tolerance `max(n, q) · ε · σ_max`.
pub fn rank_tolerance(n: usize, q: usize, sigma_max: f64) -> f64 {
    n.max(q) as f64 * f64::EPSILON * sigma_max
}

/// Nullspace of the `n × q` membership matrix from its singular value
/// decomposition.
///
/// Singular values at or below [`rank_tolerance`] count as zero. The SVD only
/// yields the row space, so the complement is completed with a Householder QR
/// of `[V_r | Id_q]`: its first `r` columns reproduce the row space and the
/// remaining `q - r` columns are an orthonormal basis of the nullspace.
///
/// Returns [`Error::TrivialNullspace`] when the nullspace is `{0}`.
pub fn nullspace_basis(indicator: &DMatrix<f64>) -> Result<Nullspace> {
    let (n, q) = indicator.shape();
    if q == 0 {
        return Err(Error::Data("membership matrix has no columns".into()));
    }
    let svd = SVD::try_new(indicator.clone(), false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of the membership matrix did not converge".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD returned no right singular vectors".into()))?;
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(n, q, sigma_max);
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    if rank >= q {
        return Err(Error::TrivialNullspace);
    }
    let mut stacked = DMatrix::zeros(q, rank + q);
    for k in 0..rank {
        stacked.column_mut(k).copy_from(&v_t.row(k).transpose());
    }
    for k in 0..q {
        stacked[(k, rank + k)] = 1.0;
    }
    let full_q = QR::new(stacked).q();
    let basis = full_q.columns(rank, q - rank).into_owned();
    Ok(Nullspace { basis, rank, singular_values })
}
