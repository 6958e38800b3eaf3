//! Compressed sparse row matrices and the factorizations needed for
//! log-determinants and the occasional linear solve.
//!
//! Every hot path in the estimator walks rows (kernel products, Gibbs row
//! lookups), so storage is CSR. Column access is obtained through
//! [`SparseMatrix::transpose`], which is itself a CSR matrix of the transpose.

mod cholesky;
mod lu;
pub mod market;
mod ordering;

pub use cholesky::{CholeskyFactor, CholeskySymbolic};
pub use lu::LuFactor;
pub use ordering::minimum_degree;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot tolerance used for singularity detection.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Symmetry tolerance for the Cholesky entry point.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Duplicate coordinates are summed. Explicit zeros are kept so that a
    /// structural pattern can be fixed independently of parameter values;
    /// call [`SparseMatrix::pruned`] to drop them.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::dim(format!(
                    "entry ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({r}, {c})")));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix directly from CSR arrays, validating the layout.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 {
            return Err(Error::dim("row pointer length must be n_rows + 1"));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::dim("column index and value arrays disagree"));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::invalid("row pointers must be nondecreasing"));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("row {r} columns are not strictly increasing")));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::dim(format!("row {r} has a column out of bounds")));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let trips = (0..m.nrows()).flat_map(|r| {
            (0..m.ncols()).filter_map(move |c| {
                let v = m[(r, c)];
                (v != 0.0).then_some((r, c, v))
            })
        });
        Self::from_triplets(m.nrows(), m.ncols(), trips).expect("dense entries are in bounds")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`, columns ascending.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Stored value at `(r, c)`, or zero.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy with exact zeros removed.
    pub fn pruned(&self) -> Self {
        let trips = self.iter().filter(|&(_, _, v)| v != 0.0);
        Self::from_triplets(self.n_rows, self.n_cols, trips).expect("pattern already valid")
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = v;
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `alpha * self + beta * other` on the union pattern (zeros kept).
    pub fn add_scaled(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::dim(format!(
                "cannot add {}x{} and {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.n_rows {
            let (ac, av) = self.row(r);
            let (bc, bv) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ac.len() || j < bc.len() {
                let take_a = j >= bc.len() || (i < ac.len() && ac[i] <= bc[j]);
                let take_b = i >= ac.len() || (j < bc.len() && bc[j] <= ac[i]);
                let c = if take_a { ac[i] } else { bc[j] };
                let mut v = 0.0;
                if take_a {
                    v += alpha * av[i];
                    i += 1;
                }
                if take_b {
                    v += beta * bv[j];
                    j += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Sparse product `self * other`. The pattern is the structural product,
    /// independent of cancellation, so it stays fixed when only values move.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.n_cols != other.n_rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let n = other.n_cols;
        let mut mark = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut cols_this_row = Vec::new();
        for r in 0..self.n_rows {
            cols_this_row.clear();
            let (ac, av) = self.row(r);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&c, &b) in bc.iter().zip(bv) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        cols_this_row.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols_this_row.sort_unstable();
            for &c in &cols_this_row {
                col_idx.push(c);
                values.push(acc[c]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Returns `m·v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_rows];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.n_cols || out.len() != self.n_rows {
            return Err(Error::dim(format!(
                "matvec of {}x{} with vector of length {} into {}",
                self.n_rows,
                self.n_cols,
                v.len(),
                out.len()
            )));
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(r, v);
        }
        Ok(())
    }

    /// Dot product of row `r` with `v`; no bounds check on `v` beyond slicing.
    #[inline]
    pub fn row_dot(&self, r: usize, v: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        cols.iter().zip(vals).map(|(&c, &a)| a * v[c]).sum()
    }

    /// `(m·v)' diag(d_inv) (m·v)`.
    pub fn quad_form_diag(&self, d_inv: &[f64], v: &[f64]) -> Result<f64> {
        if d_inv.len() != self.n_rows {
            return Err(Error::dim(format!(
                "weight vector of length {} for {} rows",
                d_inv.len(),
                self.n_rows
            )));
        }
        if v.len() != self.n_cols {
            return Err(Error::dim(format!(
                "vector of length {} for {} columns",
                v.len(),
                self.n_cols
            )));
        }
        if let Some(p) = d_inv.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::invalid(format!(
                "weight {} at position {p} is not strictly positive",
                d_inv[p]
            )));
        }
        Ok((0..self.n_rows)
            .map(|r| {
                let av = self.row_dot(r, v);
                d_inv[r] * av * av
            })
            .sum())
    }

    /// Largest asymmetry `|m_rc - m_cr|`, with its location.
    pub fn max_asymmetry(&self) -> Result<(usize, usize, f64)> {
        if !self.is_square() {
            return Err(Error::dim("symmetry requires a square matrix"));
        }
        let t = self.transpose();
        let diff = self.add_scaled(1.0, &t, -1.0)?;
        Ok(diff
            .iter()
            .map(|(r, c, v)| (r, c, v.abs()))
            .fold((0, 0, 0.0), |best, cur| if cur.2 > best.2 { cur } else { best }))
    }

    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        let (row, col, diff) = self.max_asymmetry()?;
        if diff > tol * self.max_abs().max(1.0) {
            return Err(Error::NotSymmetric { row, col, diff });
        }
        Ok(())
    }

    /// Symmetric permutation `P m P'` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<Self> {
        if !self.is_square() || perm.len() != self.n_rows {
            return Err(Error::dim("permutation length must match a square matrix"));
        }
        let mut inv = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            if old >= perm.len() || inv[old] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inv[old] = new;
        }
        let trips = self.iter().map(|(r, c, v)| (inv[r], inv[c], v));
        Self::from_triplets(self.n_rows, self.n_cols, trips)
    }
}

/// `ln|det m|` through a sparse LU factorization with partial pivoting.
pub fn sparse_lu_logdet(m: &SparseMatrix) -> Result<f64> {
    Ok(LuFactor::factorize(m)?.log_abs_det())
}

/// `ln det m` for a symmetric positive-definite `m` via sparse Cholesky.
pub fn sparse_cholesky_logdet(m: &SparseMatrix) -> Result<f64> {
    m.check_symmetric(SYMMETRY_TOLERANCE)?;
    let symbolic = CholeskySymbolic::analyze(m)?;
    Ok(symbolic.factorize(m)?.logdet())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseMatrix {
        SparseMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (0, 2, 1.0), (2, 1, -3.0), (1, 1, 4.0)]).unwrap()
    }

    #[test]
    fn identity_matvec() {
        let v = SparseMatrix::identity(3).matvec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_matvec() {
        let v = SparseMatrix::zeros(4, 3).matvec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v, vec![0.0; 4]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        assert!(matches!(small().matvec(&[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn duplicates_are_summed_and_rows_sorted() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (0, 0, 1.0), (0, 2, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_eq!(m.get(0, 2), 3.0);
    }

    #[test]
    fn out_of_bounds_triplet_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn quad_form_examples() {
        let i = SparseMatrix::identity(2);
        assert_eq!(i.quad_form_diag(&[1.0, 1.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(i.quad_form_diag(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(i.quad_form_diag(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(i.quad_form_diag(&[1.0, -2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn transpose_and_matmul_match_dense() {
        let m = small();
        assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
        let p = m.transpose().matmul(&m).unwrap();
        let d = m.to_dense().transpose() * m.to_dense();
        assert!((p.to_dense() - d).abs().max() < 1e-14);
    }

    #[test]
    fn logdet_trivial_cases() {
        assert_eq!(sparse_lu_logdet(&SparseMatrix::identity(10)).unwrap(), 0.0);
        let d = SparseMatrix::from_diagonal(&[2.0, 2.0, 2.0]);
        assert!((sparse_lu_logdet(&d).unwrap() - 3.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(sparse_cholesky_logdet(&SparseMatrix::identity(6)).unwrap(), 0.0);
        let d = SparseMatrix::from_diagonal(&[4.0, 9.0]);
        assert!((sparse_cholesky_logdet(&d).unwrap() - 36f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn singular_lu_is_reported() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)]).unwrap();
        assert!(matches!(sparse_lu_logdet(&m), Err(Error::Singular(_))));
    }

    #[test]
    fn cholesky_rejects_asymmetric_and_indefinite() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 0.5), (1, 1, 1.0)]).unwrap();
        assert!(matches!(sparse_cholesky_logdet(&m), Err(Error::NotSymmetric { .. })));
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(
            sparse_cholesky_logdet(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn permutation_roundtrip() {
        let m = small();
        let p = m.permute_symmetric(&[2, 0, 1]).unwrap();
        let back = p.permute_symmetric(&[1, 2, 0]).unwrap();
        assert_eq!(back, m);
    }
}
