//! Up-looking sparse Cholesky with a symbolic phase that can be reused for
//! every matrix sharing one sparsity pattern.

use super::{minimum_degree, SparseMatrix};
use crate::error::{Error, Result};

/// Ordering, elimination tree and factor layout for one sparsity pattern.
#[derive(Debug, Clone)]
pub struct CholeskySymbolic {
    n: usize,
    /// Pattern fingerprint of the analyzed matrix.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// Upper triangle of `P A P'` in CSC form; `src[p]` points at the value in
    /// the original CSR arrays.
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    c_src: Vec<usize>,
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
    perm: Vec<usize>,
}

/// Numeric factor `P A P' = L L'`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l_col_ptr: Vec<usize>,
    l_values: Vec<f64>,
}

impl CholeskySymbolic {
    /// Analyzes the pattern of a square matrix (values are ignored; the
    /// pattern is assumed symmetric).
    pub fn analyze(m: &SparseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("Cholesky of a non-square matrix"));
        }
        let n = m.n_rows();
        let perm = minimum_degree(m);
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // upper triangle of the permuted matrix, column-major
        let mut counts = vec![0usize; n + 1];
        for (r, c, _) in m.iter() {
            let (pr, pc) = (pinv[r], pinv[c]);
            if pr <= pc {
                counts[pc + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let c_col_ptr = counts.clone();
        let mut next = counts;
        let mut c_row_idx = vec![0usize; c_col_ptr[n]];
        let mut c_src = vec![0usize; c_col_ptr[n]];
        for r in 0..n {
            for p in m.row_ptr()[r]..m.row_ptr()[r + 1] {
                let c = m.col_idx()[p];
                let (pr, pc) = (pinv[r], pinv[c]);
                if pr <= pc {
                    let dst = next[pc];
                    c_row_idx[dst] = pr;
                    c_src[dst] = p;
                    next[pc] += 1;
                }
            }
        }

        let parent = etree(n, &c_col_ptr, &c_row_idx);

        // column counts of L by walking each row subtree once
        let mut col_counts = vec![1usize; n];
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            flag[k] = k;
            for p in c_col_ptr[k]..c_col_ptr[k + 1] {
                let mut i = c_row_idx[p];
                while i < k && flag[i] != k {
                    col_counts[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + col_counts[j];
        }

        Ok(Self {
            n,
            row_ptr: m.row_ptr().to_vec(),
            col_idx: m.col_idx().to_vec(),
            c_col_ptr,
            c_row_idx,
            c_src,
            parent,
            l_col_ptr,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros the factor will hold, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn same_pattern(&self, m: &SparseMatrix) -> bool {
        m.n_rows() == self.n && m.row_ptr() == self.row_ptr && m.col_idx() == self.col_idx
    }

    /// Numeric factorization of a matrix with the analyzed pattern.
    pub fn factorize(&self, m: &SparseMatrix) -> Result<CholeskyFactor> {
        if !self.same_pattern(m) {
            return Err(Error::invalid("matrix pattern differs from the analyzed pattern"));
        }
        let n = self.n;
        let vals = m.values();
        let mut l_row_idx = vec![0usize; self.factor_nnz()];
        let mut l_values = vec![0.0; self.factor_nnz()];
        let mut fill = self.l_col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut stack = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];

        for k in 0..n {
            // nonzero pattern of row k of L, topologically ordered in stack[top..]
            let mut top = n;
            flag[k] = k;
            x[k] = 0.0;
            for p in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
                let mut i = self.c_row_idx[p];
                x[i] += vals[self.c_src[p]];
                let mut len = 0;
                while flag[i] != k {
                    stack[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    stack[top] = stack[len];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / l_values[self.l_col_ptr[i]];
                x[i] = 0.0;
                for p in (self.l_col_ptr[i] + 1)..fill[i] {
                    x[l_row_idx[p]] -= l_values[p] * lki;
                }
                d -= lki * lki;
                let p = fill[i];
                fill[i] += 1;
                l_row_idx[p] = k;
                l_values[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    column: self.perm[k],
                    pivot: d,
                });
            }
            let p = fill[k];
            fill[k] += 1;
            l_row_idx[p] = k;
            l_values[p] = d.sqrt();
        }
        Ok(CholeskyFactor {
            l_col_ptr: self.l_col_ptr.clone(),
            l_values,
        })
    }
}

impl CholeskyFactor {
    /// `ln det A = 2 Σ ln L_kk`.
    pub fn logdet(&self) -> f64 {
        let n = self.l_col_ptr.len() - 1;
        2.0 * (0..n).map(|j| self.l_values[self.l_col_ptr[j]].ln()).sum::<f64>()
    }

    pub fn nnz(&self) -> usize {
        self.l_values.len()
    }
}

/// Elimination tree of a symmetric matrix given its upper triangle in CSC.
fn etree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for p in col_ptr[k]..col_ptr[k + 1] {
            let mut i = row_idx[p];
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                    break;
                }
                i = next;
            }
        }
    }
    parent
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_logdet() {
        // det of tridiag(-1, 2, -1) of size n is n + 1
        let n = 7;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let m = SparseMatrix::from_triplets(n, n, t).unwrap();
        let s = CholeskySymbolic::analyze(&m).unwrap();
        let f = s.factorize(&m).unwrap();
        assert!((f.logdet() - ((n + 1) as f64).ln()).abs() < 1e-13);
    }

    #[test]
    fn refactorization_reuses_pattern() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 3.0)]).unwrap();
        let s = CholeskySymbolic::analyze(&m).unwrap();
        let m2 = m.scaled(2.0);
        let f = s.factorize(&m2).unwrap();
        assert!((f.logdet() - (4.0f64 * 6.0 - 1.0).ln()).abs() < 1e-13);
        let other = SparseMatrix::identity(2);
        assert!(s.factorize(&other).is_err());
    }
}
