//! Membership matrix `I` and node-mean matrix `M` in column-compressed form.
//!
//! Both matrices share one sparsity pattern: column `g` holds the member rows
//! of node `g`, with value 1 in `I` and the node mean in `M`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nodegen::NodeSet;

/// Largest `n * q` for which dense views are materialized.
pub const DENSE_VIEW_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    means: Vec<f64>,
}

/// Assemble the design pair from cached member lists.
pub fn build_design(nodes: &NodeSet, ds: &Dataset) -> Result<DesignPair> {
    DesignPair::from_columns(ds.n(), nodes.nodes().iter().map(|r| (r.members.as_slice(), r.mean)))
}

impl DesignPair {
    /// Build from `(member rows, node mean)` per column.
    pub fn from_columns<'a>(n: usize, columns: impl IntoIterator<Item = (&'a [usize], f64)>) -> Result<Self> {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut means = Vec::new();
        for (g, (members, mean)) in columns.into_iter().enumerate() {
            if let Some(&bad) = members.iter().find(|&&i| i >= n) {
                return Err(Error::Data(format!("node {g} has member row {bad} but n = {n}")));
            }
            if members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Data(format!("node {g} member list is not strictly increasing")));
            }
            row_idx.extend_from_slice(members);
            col_ptr.push(row_idx.len());
            means.push(mean);
        }
        Ok(DesignPair { n, col_ptr, row_idx, means })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.means.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn column(&self, g: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[g]..self.col_ptr[g + 1]]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.q()).map(|g| self.column(g).len()).collect()
    }

    /// `I · w`
    pub fn indicator_mul(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.q());
        let mut out = vec![0.0; self.n];
        for (g, &wg) in w.iter().enumerate() {
            if wg != 0.0 {
                for &i in self.column(g) {
                    out[i] += wg;
                }
            }
        }
        out
    }

    /// `M · w`
    pub fn means_mul(&self, w: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = w.iter().zip(&self.means).map(|(a, b)| a * b).collect();
        self.indicator_mul(&scaled)
    }

    /// `M · B` for a dense `q × k` matrix.
    pub fn means_mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.q());
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for k in 0..b.ncols() {
            let bk = b.column(k);
            let mut col = out.column_mut(k);
            for g in 0..self.q() {
                let v = self.means[g] * bk[g];
                if v != 0.0 {
                    for &i in self.column(g) {
                        col[i] += v;
                    }
                }
            }
        }
        out
    }

    /// `Mᵀ · v`
    pub fn means_tr_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.q()).map(|g| self.means[g] * self.column(g).iter().map(|&i| v[i]).sum::<f64>()).collect()
    }

    fn check_dense(&self) -> Result<()> {
        if self.n * self.q() > DENSE_VIEW_LIMIT {
            return Err(Error::Config(format!("dense view of a {}x{} matrix exceeds the size limit", self.n, self.q())));
        }
        Ok(())
    }

    /// Dense `n × q` membership matrix.
    pub fn dense_indicator(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        Ok(self.dense_with(|_| 1.0))
    }

    /// Dense `n × q` node-mean matrix.
    pub fn dense_means(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        Ok(self.dense_with(|g| self.means[g]))
    }

    /// Dense membership matrix without the size check, for the solver.
    pub(crate) fn indicator_matrix(&self) -> DMatrix<f64> {
        self.dense_with(|_| 1.0)
    }

    fn dense_with(&self, value: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.q());
        for g in 0..self.q() {
            let v = value(g);
            for &i in self.column(g) {
                m[(i, g)] = v;
            }
        }
        m
    }

    pub fn indicator_mul_vec(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.indicator_mul(w.as_slice()))
    }
}
