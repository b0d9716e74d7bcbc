//! Versioned little-endian binary dump of a [`LoopsMatrix`].
//!
//! Layout:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "LOOPSMAT"
//! 8       4     version (u32) = 1
//! 12      1     precision tag (0 fp64, 1 fp32, 2 fp16)
//! 13      1     has_decision (0 or 1)
//! 14      2     reserved, zero
//! 16      8     nrows
//! 24      8     ncols
//! 32      8     r_boundary
//! 40      8     lanes (tile height B_r)
//! 48      8     t_neon (0 when has_decision = 0)
//! 56      8     t_sme
//! 64      ...   arrays, each a u64 length followed by the elements:
//!               csr row_ptr (u64), csr col_idx (u64), csr vals (T),
//!               bcsr block_row_ptr (u64), bcsr block_col_idx (u64),
//!               bcsr tile_vals (T)
//! ```
//!
//! Decoding treats the input as untrusted: every length is checked against
//! the remaining bytes before allocating and the decoded parts are
//! validated in full.

use crate::error::{Error, Result};
use crate::format::{BcsrPart, LoopsMatrix};
use crate::precision::{Element, Precision};
use crate::sparse::CsrMatrix;

pub const MAGIC: &[u8; 8] = b"LOOPSMAT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

/// Fixed-size header of a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub precision: Precision,
    pub nrows: usize,
    pub ncols: usize,
    pub r_boundary: usize,
    pub lanes: usize,
    /// `(t_neon, t_sme)` when the dump embeds a schedule.
    pub decision: Option<(usize, usize)>,
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_indices(out: &mut Vec<u8>, xs: &[usize]) {
    put_u64(out, xs.len());
    for &x in xs {
        put_u64(out, x);
    }
}

fn put_vals<T: Element>(out: &mut Vec<u8>, xs: &[T]) {
    put_u64(out, xs.len());
    for &x in xs {
        x.write_le(out);
    }
}

/// Serializes `m`, optionally embedding the thread split it was built for.
pub fn encode_loops<T: Element>(m: &LoopsMatrix<T>, decision: Option<(usize, usize)>) -> Vec<u8> {
    let csr = m.csr_part();
    let p = m.bcsr_part();
    let mut out = Vec::with_capacity(
        HEADER_LEN + 48 + 8 * (csr.row_ptr().len() + csr.nnz() + p.block_row_ptr().len() + p.ntiles())
            + T::BYTES * (csr.nnz() + p.tile_vals().len()),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::PRECISION.tag());
    out.push(decision.is_some() as u8);
    out.extend_from_slice(&[0, 0]);
    put_u64(&mut out, m.nrows());
    put_u64(&mut out, m.ncols());
    put_u64(&mut out, m.r_boundary());
    put_u64(&mut out, m.lanes());
    let (tn, ts) = decision.unwrap_or((0, 0));
    put_u64(&mut out, tn);
    put_u64(&mut out, ts);

    put_indices(&mut out, csr.row_ptr());
    put_indices(&mut out, csr.col_idx());
    put_vals(&mut out, csr.vals());
    put_indices(&mut out, p.block_row_ptr());
    put_indices(&mut out, p.block_col_idx());
    put_vals(&mut out, p.tile_vals());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Decode(format!("{what} {v} does not fit in usize")))
    }

    fn len_prefix(&mut self, elem: usize, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        let remaining = self.buf.len() - self.pos;
        if n.checked_mul(elem).is_none_or(|bytes| bytes > remaining) {
            return Err(Error::Decode(format!("{what} claims {n} elements, only {remaining} bytes left")));
        }
        Ok(n)
    }

    fn indices(&mut self, what: &str) -> Result<Vec<usize>> {
        let n = self.len_prefix(8, what)?;
        (0..n).map(|_| self.u64(what)).collect()
    }

    fn vals<T: Element>(&mut self, what: &str) -> Result<Vec<T>> {
        let n = self.len_prefix(T::BYTES, what)?;
        let raw = self.take(n * T::BYTES, what)?;
        let vals: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        if let Some(i) = vals.iter().position(|v| !v.to_f64().is_finite()) {
            return Err(Error::Decode(format!("{what}[{i}] is not finite")));
        }
        Ok(vals)
    }
}

/// Reads and checks the fixed header.
pub fn peek_header(bytes: &[u8]) -> Result<DumpHeader> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Decode(format!("unsupported version {version}")));
    }
    let flags = r.take(4, "flags")?;
    let precision =
        Precision::from_tag(flags[0]).ok_or_else(|| Error::Decode(format!("unknown precision tag {}", flags[0])))?;
    let has_decision = match flags[1] {
        0 => false,
        1 => true,
        v => return Err(Error::Decode(format!("bad decision flag {v}"))),
    };
    if flags[2] != 0 || flags[3] != 0 {
        return Err(Error::Decode("reserved header bytes must be zero".into()));
    }
    let nrows = r.u64("nrows")?;
    let ncols = r.u64("ncols")?;
    let r_boundary = r.u64("r_boundary")?;
    let lanes = r.u64("lanes")?;
    let t_neon = r.u64("t_neon")?;
    let t_sme = r.u64("t_sme")?;
    if r_boundary > nrows {
        return Err(Error::Decode(format!("r_boundary {r_boundary} exceeds nrows {nrows}")));
    }
    if lanes == 0 {
        return Err(Error::Decode("lanes must be at least 1".into()));
    }
    let decision = if has_decision {
        Some((t_neon, t_sme))
    } else if t_neon != 0 || t_sme != 0 {
        return Err(Error::Decode("thread counts present without decision flag".into()));
    } else {
        None
    };
    Ok(DumpHeader { precision, nrows, ncols, r_boundary, lanes, decision })
}

/// A decoded matrix plus its embedded `(t_neon, t_sme)`, if any.
pub type Decoded<T> = (LoopsMatrix<T>, Option<(usize, usize)>);

/// Decodes a dump produced by [`encode_loops`] at precision `T`.
pub fn decode_loops<T: Element>(bytes: &[u8]) -> Result<Decoded<T>> {
    let h = peek_header(bytes)?;
    if h.precision != T::PRECISION {
        return Err(Error::Decode(format!("dump holds {} data, requested {}", h.precision, T::PRECISION)));
    }
    let mut r = Reader { buf: bytes, pos: HEADER_LEN };
    let row_ptr = r.indices("csr row_ptr")?;
    let col_idx = r.indices("csr col_idx")?;
    let vals = r.vals::<T>("csr vals")?;
    let block_row_ptr = r.indices("block_row_ptr")?;
    let block_col_idx = r.indices("block_col_idx")?;
    let tile_vals = r.vals::<T>("tile_vals")?;
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let csr = CsrMatrix::new(h.r_boundary, h.ncols, row_ptr, col_idx, vals).map_err(|e| Error::Decode(e.to_string()))?;
    let bcsr = BcsrPart::new(h.nrows - h.r_boundary, h.ncols, h.lanes, block_row_ptr, block_col_idx, tile_vals)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let m = LoopsMatrix::from_parts(h.r_boundary, csr, bcsr).map_err(|e| Error::Decode(e.to_string()))?;
    Ok((m, h.decision))
}
