//! SpMM kernel paths and the hybrid dispatcher.
//!
//! * CSR part: row-wise AXPY, `C[i, :] += a_ij * B[j, :]`.
//! * BCSR part, FP64/FP32: outer-product accumulation over `lanes x 1`
//!   tiles, with several column windows of `C` held in independent
//!   accumulators per pass (multi-tile accumulation).
//! * BCSR part, FP16: tiles are consumed in pairs, interleaved with
//!   zip-lower/zip-upper, and fed to four 2-way widening accumulators that
//!   cover the four quadrants of a `cnth x cnth` output block.
//!
//! Every output element accumulates its terms in the same order (ascending
//! column of `A`) on every path, so results do not depend on the split,
//! the thread counts, or the number of tiles in flight.

use std::ops::Range;

use half::f16;

use crate::engine::{zip_pair_into, EngineConfig, LaneVector, TileAccumulator};
use crate::error::{Error, Result};
use crate::format::{BcsrPart, LoopsMatrix};
use crate::precision::{Element, Precision};
use crate::scheduler::ScheduleDecision;
use crate::sparse::{CsrMatrix, DenseMatrix};

/// Width of one AXPY segment on the CSR path.
const AXPY_SEGMENT: usize = 16;

/// Parameters shared by the BCSR kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    pub engine: EngineConfig,
    /// Accumulators held at once by the multi-tile loop.
    pub tiles_in_flight: usize,
    /// Width `N` of the dense operand.
    pub n_cols_b: usize,
}

impl KernelConfig {
    pub fn new(engine: EngineConfig, tiles_in_flight: usize, n_cols_b: usize) -> Self {
        KernelConfig { engine, tiles_in_flight, n_cols_b }
    }

    /// Uses the full accumulator budget of `precision`.
    pub fn saturating(engine: EngineConfig, precision: Precision, n_cols_b: usize) -> Self {
        KernelConfig { engine, tiles_in_flight: engine.max_tiles(precision), n_cols_b }
    }

    pub fn validate(&self, precision: Precision) -> Result<()> {
        let max = self.engine.max_tiles(precision);
        if self.tiles_in_flight == 0 || self.tiles_in_flight > max {
            return Err(Error::KernelConfig(format!(
                "tiles_in_flight {} outside 1..={max} for {precision}",
                self.tiles_in_flight
            )));
        }
        Ok(())
    }
}

/// Precision-specific choice of BCSR kernel.
pub trait KernelElement: Element {
    #[doc(hidden)]
    fn bcsr_kernel(
        part: &BcsrPart<Self>,
        b: &DenseMatrix<Self>,
        out: &mut [Self::Acc],
        out_row0: usize,
        blocks: Range<usize>,
        cfg: &KernelConfig,
        r_boundary: usize,
    );
}

impl KernelElement for f64 {
    fn bcsr_kernel(
        part: &BcsrPart<f64>,
        b: &DenseMatrix<f64>,
        out: &mut [f64],
        out_row0: usize,
        blocks: Range<usize>,
        cfg: &KernelConfig,
        r_boundary: usize,
    ) {
        bcsr_multi_tile(part, b, out, out_row0, blocks, cfg.tiles_in_flight, r_boundary)
    }
}

impl KernelElement for f32 {
    fn bcsr_kernel(
        part: &BcsrPart<f32>,
        b: &DenseMatrix<f32>,
        out: &mut [f32],
        out_row0: usize,
        blocks: Range<usize>,
        cfg: &KernelConfig,
        r_boundary: usize,
    ) {
        bcsr_multi_tile(part, b, out, out_row0, blocks, cfg.tiles_in_flight, r_boundary)
    }
}

impl KernelElement for f16 {
    fn bcsr_kernel(
        part: &BcsrPart<f16>,
        b: &DenseMatrix<f16>,
        out: &mut [f32],
        out_row0: usize,
        blocks: Range<usize>,
        cfg: &KernelConfig,
        r_boundary: usize,
    ) {
        bcsr_two_way_fp16(part, b, out, out_row0, blocks, cfg.tiles_in_flight, r_boundary)
    }
}

// ---------------------------------------------------------------------------
// CSR path

/// `out` holds consecutive output rows starting at absolute row `out_row0`.
fn csr_rows_into<T: Element>(
    part: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    out: &mut [T::Acc],
    out_row0: usize,
    rows: Range<usize>,
) {
    let n = b.ncols();
    for i in rows {
        let crow = &mut out[(i - out_row0) * n..(i - out_row0 + 1) * n];
        let (cols, vals) = part.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            let a = a.widen();
            let brow = b.row(j);
            let mut csegs = crow.chunks_exact_mut(AXPY_SEGMENT);
            let mut bsegs = brow.chunks_exact(AXPY_SEGMENT);
            for (cs, bs) in (&mut csegs).zip(&mut bsegs) {
                for (c, &x) in cs.iter_mut().zip(bs) {
                    *c += a * x.widen();
                }
            }
            for (c, &x) in csegs.into_remainder().iter_mut().zip(bsegs.remainder()) {
                *c += a * x.widen();
            }
        }
    }
}

/// Row-wise AXPY SpMM over `rows` of `part`, accumulating into `c`.
pub fn spmm_csr_rows<T: Element>(
    part: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    c: &mut DenseMatrix<T::Acc>,
    rows: Range<usize>,
) -> Result<()>
where
    T::Acc: Default,
{
    if part.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} columns, B has {} rows", part.ncols(), b.nrows())));
    }
    if c.ncols() != b.ncols() || c.nrows() < part.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "C is {}x{}, expected at least {}x{}",
            c.nrows(),
            c.ncols(),
            part.nrows(),
            b.ncols()
        )));
    }
    if rows.start > rows.end || rows.end > part.nrows() {
        return Err(Error::DimensionMismatch(format!("rows {rows:?} outside 0..{}", part.nrows())));
    }
    csr_rows_into(part, b, c.vals_mut(), 0, rows);
    Ok(())
}

// ---------------------------------------------------------------------------
// BCSR path, FP64 / FP32

fn bcsr_multi_tile<T: Element>(
    part: &BcsrPart<T>,
    b: &DenseMatrix<T>,
    out: &mut [T::Acc],
    out_row0: usize,
    blocks: Range<usize>,
    tiles_in_flight: usize,
    r_boundary: usize,
) {
    let n = b.ncols();
    let lanes = part.br();
    if n == 0 {
        return;
    }
    let windows = n.div_ceil(lanes);
    let mut accs: Vec<TileAccumulator<T::Acc>> = (0..tiles_in_flight).map(|_| TileAccumulator::new(lanes)).collect();
    let mut b_pad = LaneVector::<T>::zeros(lanes);
    let bptr = part.block_row_ptr();
    let bcol = part.block_col_idx();

    for blk in blocks {
        let valid = part.valid_rows(blk);
        let row0 = r_boundary + blk * lanes - out_row0;
        let tiles = bptr[blk]..bptr[blk + 1];
        let mut w0 = 0;
        while w0 < windows {
            let group = tiles_in_flight.min(windows - w0);
            for (g, acc) in accs[..group].iter_mut().enumerate() {
                let col0 = (w0 + g) * lanes;
                acc.load_window(out, n, row0, col0, valid, lanes.min(n - col0));
            }
            for k in tiles.clone() {
                let a = part.tile(k);
                let brow = b.row(bcol[k]);
                for (g, acc) in accs[..group].iter_mut().enumerate() {
                    let col0 = (w0 + g) * lanes;
                    if col0 + lanes <= n {
                        acc.fmopa_unchecked(a, &brow[col0..col0 + lanes]);
                    } else {
                        b_pad.load(&brow[col0..]);
                        acc.fmopa_unchecked(a, b_pad.as_slice());
                    }
                }
            }
            for (g, acc) in accs[..group].iter().enumerate() {
                let col0 = (w0 + g) * lanes;
                acc.store_window(out, n, row0, col0, valid, lanes.min(n - col0));
            }
            w0 += group;
        }
    }
}

fn check_bcsr_args<T: Element>(
    part: &BcsrPart<T>,
    b: &DenseMatrix<T>,
    c_rows: usize,
    c_cols: usize,
    blocks: &Range<usize>,
    cfg: &KernelConfig,
    r_boundary: usize,
) -> Result<()> {
    cfg.validate(T::PRECISION)?;
    let lanes = cfg.engine.lanes(T::PRECISION);
    if part.br() != lanes {
        return Err(Error::KernelConfig(format!(
            "BCSR tile height {} does not match {} lanes of {}",
            part.br(),
            lanes,
            T::PRECISION
        )));
    }
    if part.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} columns, B has {} rows", part.ncols(), b.nrows())));
    }
    if c_cols != b.ncols() || cfg.n_cols_b != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "C has {c_cols} columns, B has {}, config N is {}",
            b.ncols(),
            cfg.n_cols_b
        )));
    }
    if c_rows < r_boundary + part.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "C has {c_rows} rows, BCSR part ends at row {}",
            r_boundary + part.n_rows()
        )));
    }
    if blocks.start > blocks.end || blocks.end > part.row_block_count() {
        return Err(Error::DimensionMismatch(format!(
            "blocks {blocks:?} outside 0..{}",
            part.row_block_count()
        )));
    }
    Ok(())
}

/// Outer-product SpMM over row blocks `blocks` of an FP64 or FP32 BCSR
/// part. Output row `r` of the part is written to row `r_boundary + r` of
/// `c`.
pub fn spmm_bcsr_blocks<T: Element>(
    part: &BcsrPart<T>,
    b: &DenseMatrix<T>,
    c: &mut DenseMatrix<T::Acc>,
    blocks: Range<usize>,
    cfg: &KernelConfig,
    r_boundary: usize,
) -> Result<()>
where
    T::Acc: Default,
{
    if T::PRECISION == Precision::Fp16 {
        return Err(Error::KernelConfig("FP16 parts use spmm_bcsr_blocks_fp16".into()));
    }
    check_bcsr_args(part, b, c.nrows(), c.ncols(), &blocks, cfg, r_boundary)?;
    bcsr_multi_tile(part, b, c.vals_mut(), 0, blocks, cfg.tiles_in_flight, r_boundary);
    Ok(())
}

// ---------------------------------------------------------------------------
// BCSR path, FP16 with 2-way widening accumulation

/// Quadrant accumulators of one `cnth x cnth` output window, in order
/// (rows lo, cols lo), (rows lo, cols hi), (rows hi, cols lo), (rows hi, cols hi).
struct QuadrantWindow {
    quads: [TileAccumulator<f32>; 4],
}

impl QuadrantWindow {
    fn new(cntf: usize) -> Self {
        QuadrantWindow { quads: std::array::from_fn(|_| TileAccumulator::new(cntf)) }
    }

    /// `(row offset, col offset)` of each quadrant within the window.
    fn offsets(cntf: usize) -> [(usize, usize); 4] {
        [(0, 0), (0, cntf), (cntf, 0), (cntf, cntf)]
    }

    fn load(&mut self, out: &[f32], n: usize, row0: usize, col0: usize, valid_rows: usize, valid_cols: usize) {
        let cntf = self.quads[0].dim();
        for (q, (dr, dc)) in self.quads.iter_mut().zip(Self::offsets(cntf)) {
            let vr = valid_rows.saturating_sub(dr).min(cntf);
            let vc = valid_cols.saturating_sub(dc).min(cntf);
            q.load_window(out, n, row0 + dr, col0 + dc, vr, vc);
        }
    }

    fn store(&self, out: &mut [f32], n: usize, row0: usize, col0: usize, valid_rows: usize, valid_cols: usize) {
        let cntf = self.quads[0].dim();
        for (q, (dr, dc)) in self.quads.iter().zip(Self::offsets(cntf)) {
            let vr = valid_rows.saturating_sub(dr).min(cntf);
            let vc = valid_cols.saturating_sub(dc).min(cntf);
            q.store_window(out, n, row0 + dr, col0 + dc, vr, vc);
        }
    }

    #[inline]
    fn accumulate(&mut self, r0_a: &[f16], r1_a: &[f16], r0_b: &[f16], r1_b: &[f16]) {
        let [q0, q1, q2, q3] = &mut self.quads;
        q0.fmopa_2way_unchecked(r0_a, r0_b);
        q1.fmopa_2way_unchecked(r0_a, r1_b);
        q2.fmopa_2way_unchecked(r1_a, r0_b);
        q3.fmopa_2way_unchecked(r1_a, r1_b);
    }
}

/// Scratch registers of the FP16 loop.
struct Fp16Regs {
    tmp0: LaneVector<f16>,
    tmp1: LaneVector<f16>,
    r0_a: LaneVector<f16>,
    r1_a: LaneVector<f16>,
    r0_b: Vec<LaneVector<f16>>,
    r1_b: Vec<LaneVector<f16>>,
}

fn bcsr_two_way_fp16(
    part: &BcsrPart<f16>,
    b: &DenseMatrix<f16>,
    out: &mut [f32],
    out_row0: usize,
    blocks: Range<usize>,
    tiles_in_flight: usize,
    r_boundary: usize,
) {
    let n = b.ncols();
    let cnth = part.br();
    let cntf = cnth / 2;
    if n == 0 {
        return;
    }
    // Each window consumes four accumulators.
    let per_pass = (tiles_in_flight / 4).max(1);
    let windows = n.div_ceil(cnth);
    let mut wins: Vec<QuadrantWindow> = (0..per_pass).map(|_| QuadrantWindow::new(cntf)).collect();
    let z = || LaneVector::<f16>::zeros(cnth);
    let mut regs = Fp16Regs {
        tmp0: z(),
        tmp1: z(),
        r0_a: z(),
        r1_a: z(),
        r0_b: (0..per_pass).map(|_| z()).collect(),
        r1_b: (0..per_pass).map(|_| z()).collect(),
    };
    let zeros = vec![f16::ZERO; cnth];
    let bptr = part.block_row_ptr();
    let bcol = part.block_col_idx();

    for blk in blocks {
        let valid = part.valid_rows(blk);
        let row0 = r_boundary + blk * cnth - out_row0;
        let (lo, hi) = (bptr[blk], bptr[blk + 1]);
        let mut w0 = 0;
        while w0 < windows {
            let group = per_pass.min(windows - w0);
            for (g, win) in wins[..group].iter_mut().enumerate() {
                let col0 = (w0 + g) * cnth;
                win.load(out, n, row0, col0, valid, cnth.min(n - col0));
            }
            let mut k = lo;
            while k < hi {
                // A trailing odd tile pairs with the all-zero register.
                let pair = k + 1 < hi;
                let tile1: &[f16] = if pair { part.tile(k + 1) } else { &zeros };
                zip_pair_into(
                    regs.r0_a.as_mut_slice(),
                    regs.r1_a.as_mut_slice(),
                    part.tile(k),
                    tile1,
                );
                let b0 = b.row(bcol[k]);
                let b1 = if pair { Some(b.row(bcol[k + 1])) } else { None };
                for g in 0..group {
                    let col0 = (w0 + g) * cnth;
                    let end = (col0 + cnth).min(n);
                    regs.tmp0.load(&b0[col0..end]);
                    match b1 {
                        Some(b1) => regs.tmp1.load(&b1[col0..end]),
                        None => regs.tmp1.fill_zero(),
                    }
                    zip_pair_into(
                        regs.r0_b[g].as_mut_slice(),
                        regs.r1_b[g].as_mut_slice(),
                        regs.tmp0.as_slice(),
                        regs.tmp1.as_slice(),
                    );
                    wins[g].accumulate(
                        regs.r0_a.as_slice(),
                        regs.r1_a.as_slice(),
                        regs.r0_b[g].as_slice(),
                        regs.r1_b[g].as_slice(),
                    );
                }
                k += 2;
            }
            for (g, win) in wins[..group].iter().enumerate() {
                let col0 = (w0 + g) * cnth;
                win.store(out, n, row0, col0, valid, cnth.min(n - col0));
            }
            w0 += group;
        }
    }
}

/// FP16 BCSR SpMM over row blocks `blocks`, accumulating into an FP32 `c`.
pub fn spmm_bcsr_blocks_fp16(
    part: &BcsrPart<f16>,
    b: &DenseMatrix<f16>,
    c: &mut DenseMatrix<f32>,
    blocks: Range<usize>,
    cfg: &KernelConfig,
    r_boundary: usize,
) -> Result<()> {
    check_bcsr_args(part, b, c.nrows(), c.ncols(), &blocks, cfg, r_boundary)?;
    bcsr_two_way_fp16(part, b, c.vals_mut(), 0, blocks, cfg.tiles_in_flight, r_boundary);
    Ok(())
}

// ---------------------------------------------------------------------------
// Hybrid dispatch

/// Contiguous equal-count chunk `w` of `0..len` split `parts` ways.
fn chunk(len: usize, parts: usize, w: usize) -> Range<usize> {
    (w * len / parts)..((w + 1) * len / parts)
}

/// Runs both parts of `m` concurrently under decision `d`.
///
/// `t_neon` workers split the CSR rows and `t_sme` workers split the BCSR
/// row blocks, each into contiguous equal-count chunks. Every output row
/// has exactly one writer; the only synchronization is the final join.
pub fn spmm_loops<T: KernelElement>(
    m: &LoopsMatrix<T>,
    b: &DenseMatrix<T>,
    d: &ScheduleDecision,
    cfg: &KernelConfig,
) -> Result<DenseMatrix<T::Acc>> {
    if d.r_boundary != m.r_boundary() {
        return Err(Error::ScheduleMismatch(format!(
            "decision r_boundary {} but matrix split at {}",
            d.r_boundary,
            m.r_boundary()
        )));
    }
    let csr = m.csr_part();
    let bcsr = m.bcsr_part();
    if d.t_neon == 0 && csr.nrows() > 0 {
        return Err(Error::ScheduleMismatch("CSR part has rows but t_neon = 0".into()));
    }
    if d.t_sme == 0 && bcsr.n_rows() > 0 {
        return Err(Error::ScheduleMismatch("BCSR part has rows but t_sme = 0".into()));
    }
    if m.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} columns, B has {} rows", m.ncols(), b.nrows())));
    }
    check_bcsr_args(bcsr, b, m.nrows(), b.ncols(), &(0..bcsr.row_block_count()), cfg, m.r_boundary())?;

    let n = b.ncols();
    let rb = m.r_boundary();
    let mut c = DenseMatrix::<T::Acc>::zeros(m.nrows(), n);
    let (csr_out, bcsr_out) = c.vals_mut().split_at_mut(rb * n);

    // Carve the output into one disjoint slice per worker.
    let mut csr_jobs = Vec::new();
    let mut rest = csr_out;
    for w in 0..d.t_neon {
        let rows = chunk(rb, d.t_neon, w);
        let (mine, tail) = rest.split_at_mut(rows.len() * n);
        rest = tail;
        if !rows.is_empty() {
            csr_jobs.push((rows, mine));
        }
    }
    let nblocks = bcsr.row_block_count();
    let br = bcsr.br();
    let mut bcsr_jobs = Vec::new();
    let mut rest = bcsr_out;
    for w in 0..d.t_sme {
        let blocks = chunk(nblocks, d.t_sme, w);
        let first = blocks.start * br;
        let last = (blocks.end * br).min(bcsr.n_rows());
        let (mine, tail) = rest.split_at_mut((last - first) * n);
        rest = tail;
        if !blocks.is_empty() {
            bcsr_jobs.push((blocks, rb + first, mine));
        }
    }

    let run_csr = |rows: Range<usize>, out: &mut [T::Acc]| csr_rows_into(csr, b, out, rows.start, rows);
    let run_bcsr =
        |blocks: Range<usize>, row0: usize, out: &mut [T::Acc]| T::bcsr_kernel(bcsr, b, out, row0, blocks, cfg, rb);

    if csr_jobs.len() + bcsr_jobs.len() <= 1 {
        for (rows, out) in csr_jobs {
            run_csr(rows, out);
        }
        for (blocks, row0, out) in bcsr_jobs {
            run_bcsr(blocks, row0, out);
        }
    } else {
        std::thread::scope(|s| {
            for (rows, out) in csr_jobs {
                s.spawn(move || run_csr(rows, out));
            }
            for (blocks, row0, out) in bcsr_jobs {
                s.spawn(move || run_bcsr(blocks, row0, out));
            }
        });
    }
    Ok(c)
}

/// Useful floating-point work of one SpMM: `2 * nnz * N`. Padded tile lanes
/// are not counted.
pub fn flop_count<T: Element>(m: &LoopsMatrix<T>, n: usize) -> u64 {
    2 * m.nnz() as u64 * n as u64
}
