use std::ops::Range;

use crate::error::{Error, Result};
use crate::precision::Element;
use crate::sparse::DenseMatrix;

/// One `(row, col, val)` triplet of a coordinate assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CooEntry<T> {
    pub row: usize,
    pub col: usize,
    pub val: T,
}

/// Compressed sparse row matrix in canonical form: column indices strictly
/// increase within every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Element> CsrMatrix<T> {
    /// Builds a matrix from raw arrays, rejecting anything non-canonical.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<T>,
    ) -> Result<Self> {
        let m = CsrMatrix { nrows, ncols, row_ptr, col_idx, vals };
        m.validate()?;
        Ok(m)
    }

    pub fn empty(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![T::from_f64(1.0); n],
        }
    }

    /// Assembles from coordinate entries. Duplicate positions are summed
    /// (in FP64, then rounded once) and entries whose value is zero are
    /// dropped.
    pub fn from_coo(nrows: usize, ncols: usize, entries: &[CooEntry<T>]) -> Result<Self> {
        for e in entries {
            if e.row >= nrows || e.col >= ncols {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({}, {}) outside {}x{}",
                    e.row, e.col, nrows, ncols
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> =
            entries.iter().map(|e| (e.row, e.col, e.val.to_f64())).collect();
        sorted.sort_by_key(|e| (e.0, e.1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals = Vec::with_capacity(sorted.len());
        let mut rows = Vec::with_capacity(sorted.len());

        let mut iter = sorted.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            let stored = T::from_f64(v);
            if stored.is_zero() {
                continue;
            }
            rows.push(r);
            col_idx.push(c);
            vals.push(stored);
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix { nrows, ncols, row_ptr, col_idx, vals })
    }

    /// Checks every canonical-form invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMatrix(msg));
        if self.row_ptr.len().checked_sub(1) != Some(self.nrows) {
            return bad(format!("row_ptr has length {}, expected nrows + 1 = {}", self.row_ptr.len(), self.nrows as u128 + 1));
        }
        if self.row_ptr[0] != 0 {
            return bad("row_ptr[0] must be 0".into());
        }
        if self.col_idx.len() != self.vals.len() {
            return bad(format!("col_idx has {} entries but vals has {}", self.col_idx.len(), self.vals.len()));
        }
        if self.row_ptr[self.nrows] != self.col_idx.len() {
            return bad(format!(
                "row_ptr[nrows] = {} but nnz = {}",
                self.row_ptr[self.nrows],
                self.col_idx.len()
            ));
        }
        for i in 0..self.nrows {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if lo > hi || hi > self.col_idx.len() {
                return bad(format!("row_ptr is not monotone at row {i}"));
            }
            let cols = &self.col_idx[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= self.ncols {
                    return bad(format!("column {c} in row {i} exceeds ncols {}", self.ncols));
                }
                if k > 0 && cols[k - 1] >= c {
                    return bad(format!("columns in row {i} are not strictly increasing"));
                }
            }
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn vals(&self) -> &[T] {
        &self.vals
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Iterates triplets in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = CooEntry<T>> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| CooEntry { row: i, col: c, val: v })
        })
    }

    pub fn has_explicit_zeros(&self) -> bool {
        self.vals.iter().any(|v| v.is_zero())
    }

    /// Copies rows `rows` into a standalone matrix with the same column
    /// count.
    pub fn slice_rows(&self, rows: Range<usize>) -> Result<Self> {
        if rows.start > rows.end || rows.end > self.nrows {
            return Err(Error::DimensionMismatch(format!(
                "row range {rows:?} outside 0..{}",
                self.nrows
            )));
        }
        let lo = self.row_ptr[rows.start];
        let hi = self.row_ptr[rows.end];
        let row_ptr = self.row_ptr[rows.start..=rows.end].iter().map(|p| p - lo).collect();
        Ok(CsrMatrix {
            nrows: rows.len(),
            ncols: self.ncols,
            row_ptr,
            col_idx: self.col_idx[lo..hi].to_vec(),
            vals: self.vals[lo..hi].to_vec(),
        })
    }

    /// Converts to another precision. Entries that round to zero at the
    /// target precision are dropped so the result stays zero-free.
    pub fn cast<U: Element>(&self) -> CsrMatrix<U> {
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for i in 0..self.nrows {
            let (cols, vs) = self.row(i);
            for (&c, &v) in cols.iter().zip(vs) {
                let u = U::from_f64(v.to_f64());
                if !u.is_zero() {
                    col_idx.push(c);
                    vals.push(u);
                }
            }
            row_ptr.push(vals.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, vals }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for e in self.iter() {
            d.set(e.row, e.col, e.val);
        }
        d
    }

    /// Builds a CSR matrix without validation; callers must uphold the
    /// canonical invariants.
    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<T>,
    ) -> Self {
        let m = CsrMatrix { nrows, ncols, row_ptr, col_idx, vals };
        debug_assert!(m.validate().is_ok());
        m
    }
}
