//! Oracle comparison shared by the `verify` command and the test suites.

use crate::error::{Error, Result};
use crate::format::convert_csr_to_loops;
use crate::kernels::{spmm_loops, KernelConfig, KernelElement};
use crate::precision::{Accum, Element, Precision};
use crate::scheduler::ScheduleDecision;
use crate::sparse::{reference_spmm, CsrMatrix, DenseMatrix};

/// Maximum scaled error accepted at each input precision.
pub fn tolerance(p: Precision) -> f64 {
    match p {
        Precision::Fp64 => 1e-12,
        Precision::Fp32 => 1e-5,
        Precision::Fp16 => 5e-2,
    }
}

/// Largest `|c_ij - ref_ij| / Σ_k |a_ik·b_kj|` over all entries.
///
/// The denominator is the row-wise absolute sum of the terms of the dot
/// product, the natural scale of rounding error in `c_ij`. Entries whose
/// scale is zero must match the reference exactly; otherwise the error is
/// infinite.
pub fn max_scaled_error<T: Element, A: Accum>(
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    c: &DenseMatrix<A>,
    reference: &DenseMatrix<f64>,
) -> Result<f64> {
    if c.nrows() != reference.nrows() || c.ncols() != reference.ncols() || a.nrows() != c.nrows() {
        return Err(Error::DimensionMismatch("result and reference shapes differ".into()));
    }
    let n = b.ncols();
    let mut worst = 0.0f64;
    let mut scale = vec![0.0f64; n];
    for i in 0..a.nrows() {
        scale.fill(0.0);
        let (cols, vals) = a.row(i);
        for (&k, &v) in cols.iter().zip(vals) {
            let v = v.to_f64().abs();
            for (s, x) in scale.iter_mut().zip(b.row(k)) {
                *s += v * x.to_f64().abs();
            }
        }
        for (j, &s) in scale.iter().enumerate() {
            let err = (c.get(i, j).to_f64() - reference.get(i, j)).abs();
            let rel = if s > 0.0 {
                err / s
            } else if err == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if rel.is_nan() || rel > worst {
                worst = if rel.is_nan() { f64::INFINITY } else { rel };
            }
        }
    }
    Ok(worst)
}

/// One configuration checked against the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyCase {
    pub decision: ScheduleDecision,
    pub tiles_in_flight: usize,
    pub max_error: f64,
    pub passed: bool,
}

/// Splits `{0, n/3, n/2, n}` used by oracle sweeps.
pub fn standard_splits(nrows: usize) -> [usize; 4] {
    [0, nrows / 3, nrows / 2, nrows]
}

/// Workers for a split: an empty part gets none.
pub fn threads_for_split(nrows: usize, r_boundary: usize, t_neon: usize, t_sme: usize) -> ScheduleDecision {
    ScheduleDecision {
        t_neon: if r_boundary == 0 { 0 } else { t_neon.max(1) },
        t_sme: if r_boundary == nrows { 0 } else { t_sme.max(1) },
        r_boundary,
    }
}

/// Runs the hybrid kernel at every standard split and each thread pair and
/// compares with the FP64 oracle.
pub fn verify_matrix<T: KernelElement>(
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    cfg: &KernelConfig,
    thread_pairs: &[(usize, usize)],
) -> Result<Vec<VerifyCase>> {
    let reference = reference_spmm(a, b)?;
    let lanes = cfg.engine.lanes(T::PRECISION);
    let tol = tolerance(T::PRECISION);
    let mut out = Vec::new();
    let mut splits = standard_splits(a.nrows()).to_vec();
    splits.dedup();
    for rb in splits {
        let m = convert_csr_to_loops(a, rb, lanes)?;
        for &(tn, ts) in thread_pairs {
            let d = threads_for_split(a.nrows(), rb, tn, ts);
            let c = spmm_loops(&m, b, &d, cfg)?;
            let max_error = max_scaled_error(a, b, &c, &reference)?;
            out.push(VerifyCase { decision: d, tiles_in_flight: cfg.tiles_in_flight, max_error, passed: max_error <= tol });
        }
    }
    Ok(out)
}
