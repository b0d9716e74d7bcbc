//! Portable model of the streaming-vector / ZA-tile operations used by the
//! BCSR kernels.
//!
//! A [`TileAccumulator`] stands in for one ZA tile, a [`LaneVector`] for one
//! streaming vector register. All arithmetic happens at the accumulation
//! precision: FP64 operands accumulate in FP64; FP32 and FP16 operands in
//! FP32. FP16 operands are widened to FP32 before the multiply, and the
//! product of two widened FP16 values is exact in FP32.
//!
//! The engine holds no state besides the accumulators themselves, so
//! workers operating on disjoint accumulators never interact.

use half::f16;

use crate::error::{Error, Result};
use crate::precision::{Accum, Element, Precision};
use crate::sparse::DenseMatrix;

/// Largest lane count at the supported vector lengths (1024-bit FP16).
pub(crate) const MAX_LANES: usize = 64;

/// Streaming vector length and accumulator budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    svl_bits: usize,
    max_tiles_override: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { svl_bits: 512, max_tiles_override: None }
    }
}

impl EngineConfig {
    pub const SUPPORTED_SVL: [usize; 4] = [128, 256, 512, 1024];

    pub fn new(svl_bits: usize) -> Result<Self> {
        if !Self::SUPPORTED_SVL.contains(&svl_bits) {
            return Err(Error::EngineConfig(format!(
                "svl_bits must be one of 128, 256, 512, 1024 (got {svl_bits})"
            )));
        }
        Ok(EngineConfig { svl_bits, max_tiles_override: None })
    }

    /// Overrides the accumulator budget for every precision.
    pub fn with_max_tiles(mut self, max_tiles: usize) -> Result<Self> {
        if max_tiles == 0 {
            return Err(Error::EngineConfig("max_tiles must be at least 1".into()));
        }
        self.max_tiles_override = Some(max_tiles);
        Ok(self)
    }

    pub fn svl_bits(&self) -> usize {
        self.svl_bits
    }

    /// FP64 lanes per vector.
    pub fn cntd(&self) -> usize {
        self.svl_bits / 64
    }

    /// FP32 lanes per vector.
    pub fn cntf(&self) -> usize {
        self.svl_bits / 32
    }

    /// FP16 lanes per vector.
    pub fn cnth(&self) -> usize {
        self.svl_bits / 16
    }

    /// Input lanes per vector at `p`; this is also the BCSR tile height.
    pub fn lanes(&self, p: Precision) -> usize {
        match p {
            Precision::Fp64 => self.cntd(),
            Precision::Fp32 => self.cntf(),
            Precision::Fp16 => self.cnth(),
        }
    }

    /// Side length of one accumulator tile at `p`.
    pub fn acc_dim(&self, p: Precision) -> usize {
        match p {
            Precision::Fp64 => self.cntd(),
            Precision::Fp32 | Precision::Fp16 => self.cntf(),
        }
    }

    /// Number of independent accumulators a kernel may hold at `p`.
    pub fn max_tiles(&self, p: Precision) -> usize {
        if let Some(m) = self.max_tiles_override {
            return m;
        }
        match p {
            Precision::Fp64 => 8,
            Precision::Fp32 | Precision::Fp16 => 4,
        }
    }
}

/// One streaming vector register's worth of lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneVector<T> {
    lanes: Vec<T>,
}

impl<T: Element> LaneVector<T> {
    pub fn new(lanes: Vec<T>) -> Self {
        LaneVector { lanes }
    }

    pub fn zeros(len: usize) -> Self {
        LaneVector { lanes: vec![T::ZERO; len] }
    }

    pub fn from_f64(vals: &[f64]) -> Self {
        LaneVector { lanes: vals.iter().map(|&v| T::from_f64(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.lanes
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.lanes
    }

    /// Loads `src` into the low lanes and zeroes the rest. `src` may be
    /// shorter than the vector (the padded-remainder load).
    #[inline]
    pub fn load(&mut self, src: &[T]) {
        let n = src.len().min(self.lanes.len());
        self.lanes[..n].copy_from_slice(&src[..n]);
        self.lanes[n..].fill(T::ZERO);
    }

    pub fn fill_zero(&mut self) {
        self.lanes.fill(T::ZERO);
    }

    pub fn even_lanes(&self) -> LaneVector<T> {
        LaneVector { lanes: self.lanes.iter().step_by(2).copied().collect() }
    }

    pub fn odd_lanes(&self) -> LaneVector<T> {
        LaneVector { lanes: self.lanes.iter().skip(1).step_by(2).copied().collect() }
    }

    /// Lane-wise conversion to the accumulation precision.
    pub fn widen(&self) -> LaneVector<T::Acc>
    where
        T::Acc: Element,
    {
        LaneVector { lanes: self.lanes.iter().map(|v| v.widen()).collect() }
    }
}

fn check_zip<T>(v0: &LaneVector<T>, v1: &LaneVector<T>) -> Result<()> {
    if v0.lanes.len() != v1.lanes.len() {
        return Err(Error::LaneMismatch { expected: v0.lanes.len(), got: v1.lanes.len() });
    }
    if !v0.lanes.len().is_multiple_of(2) {
        return Err(Error::EngineConfig(format!("zip needs an even lane count, got {}", v0.lanes.len())));
    }
    Ok(())
}

#[inline]
fn zip_half_into<T: Copy>(out: &mut [T], v0: &[T], v1: &[T], base: usize) {
    for (p, pair) in out.chunks_exact_mut(2).enumerate() {
        pair[0] = v0[base + p];
        pair[1] = v1[base + p];
    }
}

/// Interleaves the lower halves: `[v0[0], v1[0], v0[1], v1[1], ...]`.
pub fn zip_lower<T: Element>(v0: &LaneVector<T>, v1: &LaneVector<T>) -> Result<LaneVector<T>> {
    check_zip(v0, v1)?;
    let mut out = LaneVector::zeros(v0.len());
    zip_half_into(&mut out.lanes, &v0.lanes, &v1.lanes, 0);
    Ok(out)
}

/// Interleaves the upper halves: `[v0[L/2], v1[L/2], v0[L/2+1], ...]`.
pub fn zip_upper<T: Element>(v0: &LaneVector<T>, v1: &LaneVector<T>) -> Result<LaneVector<T>> {
    check_zip(v0, v1)?;
    let mut out = LaneVector::zeros(v0.len());
    zip_half_into(&mut out.lanes, &v0.lanes, &v1.lanes, v0.len() / 2);
    Ok(out)
}

/// In-place zip used on the kernel hot path; lengths are kernel-guaranteed.
#[inline]
pub(crate) fn zip_pair_into<T: Copy>(lower: &mut [T], upper: &mut [T], v0: &[T], v1: &[T]) {
    let half = v0.len() / 2;
    zip_half_into(lower, v0, v1, 0);
    zip_half_into(upper, v0, v1, half);
}

/// Square accumulator modelling one ZA tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TileAccumulator<A> {
    dim: usize,
    cells: Vec<A>,
}

impl<A: Accum> TileAccumulator<A> {
    pub fn new(dim: usize) -> Self {
        TileAccumulator { dim, cells: vec![A::ZERO; dim * dim] }
    }

    pub fn from_cells(dim: usize, cells: Vec<A>) -> Result<Self> {
        if cells.len() != dim * dim {
            return Err(Error::LaneMismatch { expected: dim * dim, got: cells.len() });
        }
        Ok(TileAccumulator { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[A] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> A {
        self.cells[i * self.dim + j]
    }

    pub fn zero(&mut self) {
        self.cells.fill(A::ZERO);
    }

    /// Rank-1 update `acc[i][j] += a[i] * b[j]` with both operands widened to
    /// the accumulation precision.
    pub fn fmopa<T>(&mut self, a: &LaneVector<T>, b: &LaneVector<T>) -> Result<()>
    where
        T: Element<Acc = A>,
    {
        for v in [a, b] {
            if v.len() != self.dim {
                return Err(Error::LaneMismatch { expected: self.dim, got: v.len() });
            }
        }
        self.fmopa_unchecked(&a.lanes, &b.lanes);
        Ok(())
    }

    #[inline(always)]
    pub(crate) fn fmopa_unchecked<T: Element<Acc = A>>(&mut self, a: &[T], b: &[T]) {
        let dim = self.dim;
        let mut wb = [A::ZERO; MAX_LANES];
        for (w, &v) in wb.iter_mut().zip(b) {
            *w = v.widen();
        }
        let wb = &wb[..dim];
        for (row, &ai) in self.cells.chunks_exact_mut(dim).zip(a) {
            let ai = ai.widen();
            for (c, &bj) in row.iter_mut().zip(wb) {
                *c += ai * bj;
            }
        }
    }

    /// Copies rows `[0, valid_rows)` of the `dim`-wide window at
    /// `(row0, col0)` of `c` into the tile; all other cells are zeroed.
    pub fn load_tile(&mut self, c: &DenseMatrix<A>, row0: usize, col0: usize, valid_rows: usize) -> Result<()> {
        self.check_window(c.nrows(), c.ncols(), row0, col0, valid_rows)?;
        self.load_window(c.vals(), c.ncols(), row0, col0, valid_rows, self.dim);
        Ok(())
    }

    /// Writes rows `[0, valid_rows)` of the tile back to the window at
    /// `(row0, col0)`; rows past `valid_rows` are not written.
    pub fn store_tile(&self, c: &mut DenseMatrix<A>, row0: usize, col0: usize, valid_rows: usize) -> Result<()> {
        self.check_window(c.nrows(), c.ncols(), row0, col0, valid_rows)?;
        let stride = c.ncols();
        self.store_window(c.vals_mut(), stride, row0, col0, valid_rows, self.dim);
        Ok(())
    }

    fn check_window(&self, nrows: usize, ncols: usize, row0: usize, col0: usize, valid_rows: usize) -> Result<()> {
        if valid_rows > self.dim {
            return Err(Error::TileBounds(format!("valid_rows {valid_rows} exceeds tile dim {}", self.dim)));
        }
        if col0 + self.dim > ncols {
            return Err(Error::TileBounds(format!(
                "column window {col0}..{} exceeds {ncols} columns",
                col0 + self.dim
            )));
        }
        if row0 + valid_rows > nrows {
            return Err(Error::TileBounds(format!(
                "row window {row0}..{} exceeds {nrows} rows",
                row0 + valid_rows
            )));
        }
        Ok(())
    }

    /// Slice-level load: reads a `valid_rows x valid_cols` window of a
    /// row-major buffer with the given stride. Cells outside the window are
    /// zero, which is exactly a load through a zero-padded staging buffer.
    #[inline]
    pub(crate) fn load_window(
        &mut self,
        src: &[A],
        stride: usize,
        row0: usize,
        col0: usize,
        valid_rows: usize,
        valid_cols: usize,
    ) {
        self.cells.fill(A::ZERO);
        let dim = self.dim;
        for r in 0..valid_rows {
            let off = (row0 + r) * stride + col0;
            self.cells[r * dim..r * dim + valid_cols].copy_from_slice(&src[off..off + valid_cols]);
        }
    }

    /// Slice-level store; the padded columns past `valid_cols` are discarded.
    #[inline]
    pub(crate) fn store_window(
        &self,
        dst: &mut [A],
        stride: usize,
        row0: usize,
        col0: usize,
        valid_rows: usize,
        valid_cols: usize,
    ) {
        let dim = self.dim;
        for r in 0..valid_rows {
            let off = (row0 + r) * stride + col0;
            dst[off..off + valid_cols].copy_from_slice(&self.cells[r * dim..r * dim + valid_cols]);
        }
    }
}

impl TileAccumulator<f32> {
    /// FP16 2-way widening outer product:
    /// `acc[i][j] += h0[2i]·h1[2j] + h0[2i+1]·h1[2j+1]`, with every FP16
    /// lane widened to FP32. The even-lane product is added first, then the
    /// odd-lane product, so the result equals two consecutive [`fmopa`]
    /// calls on the de-interleaved, widened lanes.
    ///
    /// [`fmopa`]: TileAccumulator::fmopa
    pub fn fmopa_2way_fp16(&mut self, h0: &LaneVector<f16>, h1: &LaneVector<f16>) -> Result<()> {
        for v in [h0, h1] {
            if v.len() != 2 * self.dim {
                return Err(Error::LaneMismatch { expected: 2 * self.dim, got: v.len() });
            }
        }
        self.fmopa_2way_unchecked(&h0.lanes, &h1.lanes);
        Ok(())
    }

    #[inline(always)]
    pub(crate) fn fmopa_2way_unchecked(&mut self, h0: &[f16], h1: &[f16]) {
        let dim = self.dim;
        let mut b_even = [0.0f32; MAX_LANES / 2];
        let mut b_odd = [0.0f32; MAX_LANES / 2];
        for (j, pair) in h1.chunks_exact(2).enumerate() {
            b_even[j] = pair[0].to_f32();
            b_odd[j] = pair[1].to_f32();
        }
        let (b_even, b_odd) = (&b_even[..dim], &b_odd[..dim]);
        for (row, pair) in self.cells.chunks_exact_mut(dim).zip(h0.chunks_exact(2)) {
            let (a0, a1) = (pair[0].to_f32(), pair[1].to_f32());
            for ((c, &e), &o) in row.iter_mut().zip(b_even).zip(b_odd) {
                *c = (*c + a0 * e) + a1 * o;
            }
        }
    }
}
