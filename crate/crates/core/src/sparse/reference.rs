use crate::error::{Error, Result};
use crate::precision::Element;
use crate::sparse::{CsrMatrix, DenseMatrix};

/// Inner-product SpMM oracle, `c_ij = Σ_k a_ik · b_kj`, evaluated with
/// every operand widened to FP64 and accumulated in FP64.
pub fn reference_spmm<T: Element>(a: &CsrMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<f64>> {
    if a.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let n = b.ncols();
    let mut c = DenseMatrix::<f64>::zeros(a.nrows(), n);
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for j in 0..n {
            let mut sum = 0.0f64;
            for (&k, &v) in cols.iter().zip(vals) {
                sum += v.to_f64() * b.get(k, j).to_f64();
            }
            c.set(i, j, sum);
        }
    }
    Ok(c)
}
