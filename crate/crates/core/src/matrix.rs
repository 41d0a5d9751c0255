//! Design-matrix storage. Column access is the hot operation (one column per
//! coordinate update), so the dense layout is column-major and the sparse
//! layout is compressed sparse column.

use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub enum DesignMatrix<S> {
    /// Column-major dense storage: entry (i, j) sits at `cols[j*m + i]`.
    Dense { m: usize, n: usize, cols: Vec<S> },
    Csc {
        m: usize,
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        vals: Vec<S>,
    },
}

/// Borrowed view of one column.
pub enum ColView<'a, S> {
    Dense(&'a [S]),
    Sparse { rows: &'a [usize], vals: &'a [S] },
}

impl<'a, S: Scalar> ColView<'a, S> {
    #[inline]
    pub fn dot(&self, v: &[S]) -> S {
        match self {
            ColView::Dense(col) => {
                let mut acc = S::zero();
                for (a, x) in col.iter().zip(v) {
                    acc = acc + *a * *x;
                }
                acc
            }
            ColView::Sparse { rows, vals } => {
                let mut acc = S::zero();
                for (r, a) in rows.iter().zip(vals.iter()) {
                    acc = acc + *a * v[*r];
                }
                acc
            }
        }
    }

    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, S)) {
        match self {
            ColView::Dense(col) => {
                for (i, a) in col.iter().enumerate() {
                    f(i, *a);
                }
            }
            ColView::Sparse { rows, vals } => {
                for (r, a) in rows.iter().zip(vals.iter()) {
                    f(*r, *a);
                }
            }
        }
    }

    pub fn sq_norm(&self) -> S {
        match self {
            ColView::Dense(col) => col.iter().fold(S::zero(), |s, a| s + *a * *a),
            ColView::Sparse { vals, .. } => vals.iter().fold(S::zero(), |s, a| s + *a * *a),
        }
    }
}

impl<S: Scalar> DesignMatrix<S> {
    /// Builds dense column-major storage from row-major data (the on-disk and
    /// constructor-friendly order).
    pub fn from_dense_rows(m: usize, n: usize, rows: &[S]) -> Result<Self> {
        if rows.len() != m * n {
            return Err(Error::Dimension(format!(
                "dense matrix: expected {}x{}={} entries, got {}",
                m,
                n,
                m * n,
                rows.len()
            )));
        }
        let mut cols = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                cols[j * m + i] = rows[i * n + j];
            }
        }
        Ok(DesignMatrix::Dense { m, n, cols })
    }

    /// Builds CSC storage from (row, col, value) triplets; duplicate entries
    /// are summed.
    pub fn from_triplets(m: usize, n: usize, trip: &[(usize, usize, S)]) -> Result<Self> {
        for &(i, j, _) in trip {
            if i >= m || j >= n {
                return Err(Error::Dimension(format!(
                    "triplet ({i}, {j}) outside {m}x{n}"
                )));
            }
        }
        let mut per_col: Vec<Vec<(usize, S)>> = vec![Vec::new(); n];
        for &(i, j, v) in trip {
            per_col[j].push((i, v));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for entries in per_col.iter_mut() {
            entries.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(i, v) in entries.iter() {
                if last == Some(i) {
                    let t = vals.len() - 1;
                    vals[t] = vals[t] + v;
                } else {
                    row_idx.push(i);
                    vals.push(v);
                    last = Some(i);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(DesignMatrix::Csc {
            m,
            n,
            col_ptr,
            row_idx,
            vals,
        })
    }

    pub fn rows(&self) -> usize {
        match self {
            DesignMatrix::Dense { m, .. } | DesignMatrix::Csc { m, .. } => *m,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            DesignMatrix::Dense { n, .. } | DesignMatrix::Csc { n, .. } => *n,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, DesignMatrix::Dense { .. })
    }

    #[inline]
    pub fn col(&self, j: usize) -> ColView<'_, S> {
        match self {
            DesignMatrix::Dense { m, cols, .. } => ColView::Dense(&cols[j * m..(j + 1) * m]),
            DesignMatrix::Csc {
                col_ptr,
                row_idx,
                vals,
                ..
            } => {
                let (lo, hi) = (col_ptr[j], col_ptr[j + 1]);
                ColView::Sparse {
                    rows: &row_idx[lo..hi],
                    vals: &vals[lo..hi],
                }
            }
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> S {
        match self {
            DesignMatrix::Dense { m, cols, .. } => cols[j * m + i],
            DesignMatrix::Csc { .. } => {
                let mut v = S::zero();
                self.col(j).for_each(|r, a| {
                    if r == i {
                        v = v + a;
                    }
                });
                v
            }
        }
    }

    /// out = A x (column sweep; `out` must have length m).
    pub fn matvec(&self, x: &[S], out: &mut [S]) {
        assert_eq!(x.len(), self.cols(), "matvec: x has wrong length");
        assert_eq!(out.len(), self.rows(), "matvec: out has wrong length");
        for v in out.iter_mut() {
            *v = S::zero();
        }
        for (j, xj) in x.iter().enumerate() {
            if *xj != S::zero() {
                self.col(j).for_each(|i, a| out[i] += a * *xj);
            }
        }
    }

    /// Returns Aᵀ v as a fresh vector (`v` has length m).
    pub fn t_matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows(), "t_matvec: v has wrong length");
        (0..self.cols()).map(|j| self.col(j).dot(v)).collect()
    }

    /// Dense n×n Gram matrix AᵀA, column-major. Exactly symmetric: each pair
    /// is computed once and mirrored.
    pub fn gram(&self) -> Vec<S> {
        let n = self.cols();
        let mut g = vec![S::zero(); n * n];
        match self {
            DesignMatrix::Dense { m, cols, .. } => {
                for j in 0..n {
                    let cj = &cols[j * m..(j + 1) * m];
                    for i in j..n {
                        let ci = &cols[i * m..(i + 1) * m];
                        let mut acc = S::zero();
                        for (a, b) in ci.iter().zip(cj) {
                            acc = acc + *a * *b;
                        }
                        g[j * n + i] = acc;
                        g[i * n + j] = acc;
                    }
                }
            }
            DesignMatrix::Csc { .. } => {
                let m = self.rows();
                let mut dense_col = vec![S::zero(); m];
                for j in 0..n {
                    for v in dense_col.iter_mut() {
                        *v = S::zero();
                    }
                    self.col(j).for_each(|i, a| dense_col[i] = a);
                    for i in j..n {
                        let acc = self.col(i).dot(&dense_col);
                        g[j * n + i] = acc;
                        g[i * n + j] = acc;
                    }
                }
            }
        }
        g
    }

    pub fn gram_diag(&self) -> Vec<S> {
        (0..self.cols()).map(|j| self.col(j).sq_norm()).collect()
    }
}
