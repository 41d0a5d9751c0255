//! Shared iterate cells. Every read returns some previously written value of
//! that cell (never a torn scalar); a vector read assembled cell by cell may
//! interleave with concurrent writes, which is exactly the inconsistent-
//! snapshot model the step-size theory accounts for.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::matrix::{ColView, DesignMatrix};
use crate::scalar::{AtomicCell, Scalar};

pub struct SharedIterate<S: Scalar> {
    x: Vec<S::Atomic>,
    /// Maintained r = Ax − b cells (matrix-free gradient mode). Multiple
    /// writers touch one cell, so all updates go through fetch_add.
    residual: Option<Vec<S::Atomic>>,
    /// Global component-update counter.
    pub k: AtomicU64,
    /// Last-write counter stamp per coordinate (delay bookkeeping).
    stamps: Option<Vec<AtomicU64>>,
}

impl<S: Scalar> SharedIterate<S> {
    /// Starts at x = 0. `residual_init` seeds the maintained residual cells
    /// (−b for a zero start); `stamped` allocates write stamps.
    pub fn new(n: usize, residual_init: Option<&[S]>, stamped: bool) -> Self {
        SharedIterate {
            x: (0..n).map(|_| S::Atomic::new(S::zero())).collect(),
            residual: residual_init
                .map(|r| r.iter().map(|&v| S::Atomic::new(v)).collect()),
            k: AtomicU64::new(0),
            stamps: stamped.then(|| (0..n).map(|_| AtomicU64::new(0)).collect()),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn read_x(&self, i: usize) -> S {
        self.x[i].load()
    }

    #[inline]
    pub fn write_x(&self, i: usize, v: S) {
        self.x[i].store(v);
    }

    pub fn has_residual(&self) -> bool {
        self.residual.is_some()
    }

    /// Adds `a_col · delta` into the residual cells touched by column j.
    #[inline]
    pub fn residual_add(&self, a: &DesignMatrix<S>, j: usize, delta: S) {
        let res = self.residual.as_ref().expect("no residual cells");
        match a.col(j) {
            ColView::Dense(col) => {
                for (r, &aij) in col.iter().enumerate() {
                    if aij != S::zero() {
                        res[r].fetch_add(aij * delta);
                    }
                }
            }
            ColView::Sparse { rows, vals } => {
                for (&r, &aij) in rows.iter().zip(vals) {
                    res[r].fetch_add(aij * delta);
                }
            }
        }
    }

    /// aⱼᵀr over the live residual cells; the mixture of update generations
    /// this reads is the matrix-free form of a delayed gradient.
    #[inline]
    pub fn residual_col_dot(&self, a: &DesignMatrix<S>, j: usize) -> S {
        let res = self.residual.as_ref().expect("no residual cells");
        let mut acc = S::zero();
        match a.col(j) {
            ColView::Dense(col) => {
                for (r, &aij) in col.iter().enumerate() {
                    acc = acc + aij * res[r].load();
                }
            }
            ColView::Sparse { rows, vals } => {
                for (&r, &aij) in rows.iter().zip(vals) {
                    acc = acc + aij * res[r].load();
                }
            }
        }
        acc
    }

    /// Cell-by-cell copy of x into `buf` (an inconsistent snapshot while
    /// workers run; exact after quiescence).
    pub fn snapshot_into(&self, buf: &mut [S]) {
        debug_assert_eq!(buf.len(), self.x.len());
        for (b, cell) in buf.iter_mut().zip(&self.x) {
            *b = cell.load();
        }
    }

    /// Snapshot plus per-cell read ages against the stamp table.
    /// `own` is the reader's own coordinate, whose age is 0 by ownership.
    /// Returns the max age seen.
    pub fn snapshot_with_ages(
        &self,
        buf: &mut [S],
        k_read: u64,
        own: usize,
        hist: &[AtomicU64],
    ) -> u64 {
        let stamps = self.stamps.as_ref().expect("stamps not enabled");
        let cap = hist.len() - 1;
        let mut max_age = 0u64;
        for (j, (b, cell)) in buf.iter_mut().zip(&self.x).enumerate() {
            *b = cell.load();
            let age = if j == own {
                0
            } else {
                k_read.saturating_sub(stamps[j].load(Ordering::Relaxed))
            };
            hist[(age as usize).min(cap)].fetch_add(1, Ordering::Relaxed);
            max_age = max_age.max(age);
        }
        max_age
    }

    #[inline]
    pub fn stamp(&self, i: usize, k: u64) {
        if let Some(st) = &self.stamps {
            st[i].store(k, Ordering::Relaxed);
        }
    }

    /// Consistent copy; callers must ensure writers have quiesced.
    pub fn final_x(&self) -> Vec<S> {
        self.x.iter().map(|c| c.load()).collect()
    }

    /// Consistent residual copy after quiescence.
    pub fn final_residual(&self) -> Option<Vec<S>> {
        self.residual
            .as_ref()
            .map(|r| r.iter().map(|c| c.load()).collect())
    }

    /// Σ rᵢ² over the live cells (cheap progress proxy in residual mode).
    pub fn residual_sq_norm(&self) -> Option<S> {
        self.residual
            .as_ref()
            .map(|r| r.iter().fold(S::zero(), |s, c| s + c.load() * c.load()))
    }
}
