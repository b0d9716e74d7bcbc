use crate::error::{Error, Result};
use crate::precision::Element;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    nrows: usize,
    ncols: usize,
    vals: Vec<T>,
}

impl<T: Copy + Default> DenseMatrix<T> {
    pub fn new(nrows: usize, ncols: usize, vals: Vec<T>) -> Result<Self> {
        let expected = nrows
            .checked_mul(ncols)
            .ok_or_else(|| Error::InvalidMatrix(format!("{nrows}x{ncols} overflows")))?;
        if vals.len() != expected {
            return Err(Error::InvalidMatrix(format!(
                "dense {nrows}x{ncols} needs {expected} values, got {}",
                vals.len()
            )));
        }
        Ok(DenseMatrix { nrows, ncols, vals })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix { nrows, ncols, vals: vec![T::default(); nrows * ncols] }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut vals = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                vals.push(f(i, j));
            }
        }
        DenseMatrix { nrows, ncols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn vals(&self) -> &[T] {
        &self.vals
    }

    pub fn vals_mut(&mut self) -> &mut [T] {
        &mut self.vals
    }

    pub fn into_vals(self) -> Vec<T> {
        self.vals
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.vals[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.vals[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.vals[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.vals[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> DenseMatrix<U> {
        DenseMatrix { nrows: self.nrows, ncols: self.ncols, vals: self.vals.iter().map(|&v| f(v)).collect() }
    }
}

impl<T: Element> DenseMatrix<T> {
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::from_f64(1.0) } else { T::ZERO })
    }

    pub fn cast<U: Element>(&self) -> DenseMatrix<U> {
        self.map(|v| U::from_f64(v.to_f64()))
    }

    pub fn to_f64(&self) -> DenseMatrix<f64> {
        self.map(|v| v.to_f64())
    }
}

impl DenseMatrix<f32> {
    /// Optional down-conversion of an FP32 result (the FP16 path's native
    /// output) to FP16 storage.
    pub fn to_f16(&self) -> DenseMatrix<half::f16> {
        self.map(half::f16::from_f32)
    }
}
