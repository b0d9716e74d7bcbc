//! The LOOPS hybrid layout: rows `[0, r_boundary)` stay in CSR, the rest
//! are packed into vector-wise BCSR tiles of shape `lanes x 1`.

mod dump;

use std::collections::HashMap;

pub use dump::{decode_loops, encode_loops, peek_header, DumpHeader, MAGIC, VERSION};

use crate::error::{Error, Result};
use crate::precision::Element;
use crate::sparse::{CsrMatrix, DenseMatrix};

/// Vector-wise blocked part. Row indices are rebased so row 0 of the part
/// is absolute row `r_boundary` of the hybrid matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BcsrPart<T> {
    n_rows: usize,
    ncols: usize,
    br: usize,
    bc: usize,
    block_row_ptr: Vec<usize>,
    block_col_idx: Vec<usize>,
    tile_vals: Vec<T>,
}

impl<T: Element> BcsrPart<T> {
    /// Builds from raw arrays and checks every layout invariant.
    pub fn new(
        n_rows: usize,
        ncols: usize,
        br: usize,
        block_row_ptr: Vec<usize>,
        block_col_idx: Vec<usize>,
        tile_vals: Vec<T>,
    ) -> Result<Self> {
        let p = BcsrPart { n_rows, ncols, br, bc: 1, block_row_ptr, block_col_idx, tile_vals };
        p.validate()?;
        Ok(p)
    }

    pub fn empty(ncols: usize, br: usize) -> Self {
        BcsrPart { n_rows: 0, ncols, br, bc: 1, block_row_ptr: vec![0], block_col_idx: Vec::new(), tile_vals: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMatrix(format!("BCSR part: {m}")));
        if self.br == 0 {
            return bad("tile height must be at least 1".into());
        }
        if self.bc != 1 {
            return bad(format!("tile width must be 1, got {}", self.bc));
        }
        let blocks = self.row_block_count();
        if self.block_row_ptr.len().checked_sub(1) != Some(blocks) {
            return bad(format!("block_row_ptr has length {}, expected {}", self.block_row_ptr.len(), blocks as u128 + 1));
        }
        if self.block_row_ptr[0] != 0 {
            return bad("block_row_ptr[0] must be 0".into());
        }
        let ntiles = self.block_col_idx.len();
        if self.block_row_ptr[blocks] != ntiles {
            return bad(format!("final block_row_ptr {} != ntiles {ntiles}", self.block_row_ptr[blocks]));
        }
        if ntiles.checked_mul(self.br).map(|n| n * self.bc) != Some(self.tile_vals.len()) {
            return bad(format!("tile_vals has {} slots for {ntiles} tiles of {}", self.tile_vals.len(), self.br));
        }
        for b in 0..blocks {
            let (lo, hi) = (self.block_row_ptr[b], self.block_row_ptr[b + 1]);
            if lo > hi || hi > ntiles {
                return bad(format!("block_row_ptr is not monotone at block {b}"));
            }
            let valid = self.valid_rows(b);
            for k in lo..hi {
                let c = self.block_col_idx[k];
                if c * self.bc >= self.ncols {
                    return bad(format!("tile column {c} outside {} columns", self.ncols));
                }
                if k > lo && self.block_col_idx[k - 1] >= c {
                    return bad(format!("tile columns in block {b} not strictly increasing"));
                }
                let tile = self.tile(k);
                if tile.iter().all(|v| v.is_zero()) {
                    return bad(format!("tile {k} is all zero"));
                }
                if tile[valid..].iter().any(|v| !v.is_zero()) {
                    return bad(format!("tile {k} has values past the last row"));
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Tile height (lanes per vector at the packing precision).
    pub fn br(&self) -> usize {
        self.br
    }

    /// Tile width; always 1.
    pub fn bc(&self) -> usize {
        self.bc
    }

    pub fn row_block_count(&self) -> usize {
        self.n_rows.div_ceil(self.br)
    }

    pub fn ntiles(&self) -> usize {
        self.block_col_idx.len()
    }

    pub fn block_row_ptr(&self) -> &[usize] {
        &self.block_row_ptr
    }

    pub fn block_col_idx(&self) -> &[usize] {
        &self.block_col_idx
    }

    pub fn tile_vals(&self) -> &[T] {
        &self.tile_vals
    }

    /// The `br * bc` values of tile `k`, row-major within the tile.
    #[inline]
    pub fn tile(&self, k: usize) -> &[T] {
        let sz = self.br * self.bc;
        &self.tile_vals[k * sz..(k + 1) * sz]
    }

    /// Rows of row block `b` that exist in the part (the last block may be
    /// short).
    #[inline]
    pub fn valid_rows(&self, b: usize) -> usize {
        (self.n_rows - b * self.br).min(self.br)
    }

    /// Count of nonzero lanes across all stored tiles.
    pub fn nnz(&self) -> usize {
        self.tile_vals.iter().filter(|v| !v.is_zero()).count()
    }
}

/// Hybrid matrix: CSR part over rows `[0, r_boundary)`, BCSR part over the
/// remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopsMatrix<T> {
    nrows: usize,
    ncols: usize,
    r_boundary: usize,
    csr_part: CsrMatrix<T>,
    bcsr_part: BcsrPart<T>,
}

impl<T: Element> LoopsMatrix<T> {
    pub fn from_parts(r_boundary: usize, csr_part: CsrMatrix<T>, bcsr_part: BcsrPart<T>) -> Result<Self> {
        if csr_part.nrows() != r_boundary {
            return Err(Error::InvalidMatrix(format!(
                "CSR part has {} rows, r_boundary is {r_boundary}",
                csr_part.nrows()
            )));
        }
        if csr_part.ncols() != bcsr_part.ncols() {
            return Err(Error::InvalidMatrix("CSR and BCSR parts disagree on ncols".into()));
        }
        Ok(LoopsMatrix {
            nrows: r_boundary + bcsr_part.n_rows(),
            ncols: csr_part.ncols(),
            r_boundary,
            csr_part,
            bcsr_part,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn r_boundary(&self) -> usize {
        self.r_boundary
    }

    pub fn lanes(&self) -> usize {
        self.bcsr_part.br()
    }

    pub fn csr_part(&self) -> &CsrMatrix<T> {
        &self.csr_part
    }

    pub fn bcsr_part(&self) -> &BcsrPart<T> {
        &self.bcsr_part
    }

    /// Nonzeros of the source matrix (padding excluded).
    pub fn nnz(&self) -> usize {
        self.csr_part.nnz() + self.bcsr_part.nnz()
    }
}

/// Converts a CSR matrix to the LOOPS layout.
///
/// Rows below `r_boundary` are copied verbatim. Each remaining nonzero
/// `(i, j)` lands in tile `((i - r_boundary) / B_r, j / B_c)` at offset
/// `((i - r_boundary) mod B_r) * B_c + (j mod B_c)`. Tiles are zero-padded
/// and sorted by column within each row block. Explicit zeros in the BCSR
/// region are not materialized.
pub fn convert_csr_to_loops<T: Element>(src: &CsrMatrix<T>, r_boundary: usize, lanes: usize) -> Result<LoopsMatrix<T>> {
    if r_boundary > src.nrows() {
        return Err(Error::Conversion(format!("r_boundary {r_boundary} exceeds {} rows", src.nrows())));
    }
    if lanes == 0 {
        return Err(Error::Conversion("lanes must be at least 1".into()));
    }
    let (br, bc) = (lanes, 1usize);
    let tile_size = br * bc;

    // Step 1: CSR part.
    let csr_part = src.slice_rows(0..r_boundary)?;

    // Step 2: BCSR part, one row block at a time.
    let n_rows = src.nrows() - r_boundary;
    let blocks = n_rows.div_ceil(br);
    let mut block_row_ptr = Vec::with_capacity(blocks + 1);
    block_row_ptr.push(0);
    let mut block_col_idx = Vec::new();
    let mut tile_vals = Vec::new();

    let mut staging: HashMap<usize, usize> = HashMap::new();
    let mut staged: Vec<(usize, Vec<T>)> = Vec::new();
    for b in 0..blocks {
        staging.clear();
        staged.clear();
        let first = r_boundary + b * br;
        let last = (first + br).min(src.nrows());
        for i in first..last {
            let local = i - r_boundary;
            let (cols, vals) = src.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if v.is_zero() {
                    continue;
                }
                let tile_c = j / bc;
                let offset = (local % br) * bc + (j % bc);
                let slot = *staging.entry(tile_c).or_insert_with(|| {
                    staged.push((tile_c, vec![T::ZERO; tile_size]));
                    staged.len() - 1
                });
                staged[slot].1[offset] = v;
            }
        }
        staged.sort_unstable_by_key(|(c, _)| *c);
        for (c, vals) in staged.drain(..) {
            block_col_idx.push(c);
            tile_vals.extend_from_slice(&vals);
        }
        block_row_ptr.push(block_col_idx.len());
    }

    let bcsr_part = BcsrPart { n_rows, ncols: src.ncols(), br, bc, block_row_ptr, block_col_idx, tile_vals };
    debug_assert!(bcsr_part.validate().is_ok());
    LoopsMatrix::from_parts(r_boundary, csr_part, bcsr_part)
}

/// Reassembles the canonical CSR matrix; padded zeros are skipped.
pub fn loops_to_csr<T: Element>(m: &LoopsMatrix<T>) -> CsrMatrix<T> {
    let csr = &m.csr_part;
    let p = &m.bcsr_part;
    let mut row_ptr = csr.row_ptr().to_vec();
    let mut col_idx = csr.col_idx().to_vec();
    let mut vals = csr.vals().to_vec();
    row_ptr.reserve(p.n_rows);

    for b in 0..p.row_block_count() {
        let (lo, hi) = (p.block_row_ptr[b], p.block_row_ptr[b + 1]);
        for lane in 0..p.valid_rows(b) {
            for k in lo..hi {
                let tile = p.tile(k);
                for c in 0..p.bc {
                    let v = tile[lane * p.bc + c];
                    if !v.is_zero() {
                        col_idx.push(p.block_col_idx[k] * p.bc + c);
                        vals.push(v);
                    }
                }
            }
            row_ptr.push(vals.len());
        }
    }
    CsrMatrix::from_parts_unchecked(m.nrows, m.ncols, row_ptr, col_idx, vals)
}

/// Average nonzero lanes per stored tile, in `(0, B_r * B_c]`.
pub fn block_density<T: Element>(p: &BcsrPart<T>) -> Result<f64> {
    if p.ntiles() == 0 {
        return Err(Error::EmptyBcsr);
    }
    Ok(p.nnz() as f64 / p.ntiles() as f64)
}

/// Densifies the BCSR part (rebased rows) for tests and diagnostics.
pub fn bcsr_to_dense<T: Element>(p: &BcsrPart<T>) -> DenseMatrix<T> {
    let mut d = DenseMatrix::zeros(p.n_rows, p.ncols);
    for b in 0..p.row_block_count() {
        for k in p.block_row_ptr[b]..p.block_row_ptr[b + 1] {
            let tile = p.tile(k);
            for lane in 0..p.valid_rows(b) {
                d.set(b * p.br + lane, p.block_col_idx[k], tile[lane]);
            }
        }
    }
    d
}
