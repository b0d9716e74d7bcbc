use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::precision::Element;
use crate::sparse::{CsrMatrix, DenseMatrix};

/// Smallest magnitude drawn for a stored value; keeps every value nonzero
/// after rounding to FP16.
const MIN_MAGNITUDE: f64 = 1.0 / 1024.0;

fn draw_value(rng: &mut ChaCha8Rng) -> f64 {
    let mag = rng.gen_range(MIN_MAGNITUDE..=1.0);
    if rng.gen::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Seeded random sparse matrix with exactly `round(density * nrows * ncols)`
/// nonzeros at distinct positions, values in `[-1, -1/1024] ∪ [1/1024, 1]`.
///
/// The pattern and the FP64 values depend only on the arguments, so the
/// same seed gives the same matrix at every precision (modulo rounding).
pub fn random_sparse<T: Element>(nrows: usize, ncols: usize, density: f64, seed: u64) -> CsrMatrix<T> {
    let total = nrows * ncols;
    if total == 0 {
        return CsrMatrix::empty(nrows, ncols);
    }
    let density = density.clamp(0.0, 1.0);
    let target = ((density * total as f64).round() as usize).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = index::sample(&mut rng, total, target).into_vec();
    positions.sort_unstable();

    let mut row_ptr = vec![0usize; nrows + 1];
    let mut col_idx = Vec::with_capacity(target);
    let mut vals = Vec::with_capacity(target);
    for p in positions {
        let (r, c) = (p / ncols, p % ncols);
        row_ptr[r + 1] += 1;
        col_idx.push(c);
        vals.push(T::from_f64(draw_value(&mut rng)));
    }
    for i in 0..nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    CsrMatrix::from_parts_unchecked(nrows, ncols, row_ptr, col_idx, vals)
}

/// Seeded dense matrix with uniform values in `[-1, 1]`.
pub fn random_dense<T: Element>(nrows: usize, ncols: usize, seed: u64) -> DenseMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(nrows, ncols, |_, _| T::from_f64(rng.gen_range(-1.0..=1.0)))
}
