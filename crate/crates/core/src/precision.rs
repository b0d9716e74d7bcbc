//! Element precisions and the widening rule that ties each input precision
//! to its accumulation precision.
//!
//! FP64 accumulates in FP64, FP32 in FP32, and FP16 inputs always accumulate
//! in FP32 (the f16f16f32 mode). FP16 is never used as an accumulator.

use std::fmt::{self, Debug, Display};
use std::ops::{Add, AddAssign, Mul};
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

/// Precision tag of a matrix or kernel run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp64,
    Fp32,
    Fp16,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Fp64, Precision::Fp32, Precision::Fp16];

    /// Width of one input element in bits.
    pub fn bits(self) -> usize {
        match self {
            Precision::Fp64 => 64,
            Precision::Fp32 => 32,
            Precision::Fp16 => 16,
        }
    }

    /// Width of the accumulator element in bits.
    pub fn accumulation_bits(self) -> usize {
        match self {
            Precision::Fp64 => 64,
            Precision::Fp32 | Precision::Fp16 => 32,
        }
    }

    /// Tag byte used by the binary LOOPS dump.
    pub fn tag(self) -> u8 {
        match self {
            Precision::Fp64 => 0,
            Precision::Fp32 => 1,
            Precision::Fp16 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Precision::Fp64),
            1 => Some(Precision::Fp32),
            2 => Some(Precision::Fp16),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Fp64 => "fp64",
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fp64" | "f64" | "double" => Ok(Precision::Fp64),
            "fp32" | "f32" | "float" => Ok(Precision::Fp32),
            "fp16" | "f16" | "half" => Ok(Precision::Fp16),
            other => Err(format!("unknown precision `{other}` (expected fp64, fp32 or fp16)")),
        }
    }
}

/// Accumulator scalar: the arithmetic type of tile cells and output matrices.
pub trait Accum:
    Copy
    + Default
    + Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Mul<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Accum for f64 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Accum for f32 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

/// Input scalar stored in sparse and dense operands.
pub trait Element: Copy + Default + Debug + PartialEq + Send + Sync + 'static {
    /// Accumulation type paired with this input type.
    type Acc: Accum;
    const PRECISION: Precision;
    const ZERO: Self;
    /// Size in bytes of the little-endian encoding.
    const BYTES: usize;

    fn widen(self) -> Self::Acc;
    fn to_f64(self) -> f64;
    /// Round-to-nearest conversion from `f64`.
    fn from_f64(v: f64) -> Self;
    fn is_zero(self) -> bool;
    fn write_le(self, out: &mut Vec<u8>);
    /// Decodes from exactly `BYTES` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f64 {
    type Acc = f64;
    const PRECISION: Precision = Precision::Fp64;
    const ZERO: Self = 0.0;
    const BYTES: usize = 8;

    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        self == 0.0
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for f32 {
    type Acc = f32;
    const PRECISION: Precision = Precision::Fp32;
    const ZERO: Self = 0.0;
    const BYTES: usize = 4;

    #[inline(always)]
    fn widen(self) -> f32 {
        self
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        self == 0.0
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f16 {
    type Acc = f32;
    const PRECISION: Precision = Precision::Fp16;
    const ZERO: Self = f16::ZERO;
    const BYTES: usize = 2;

    #[inline(always)]
    fn widen(self) -> f32 {
        self.to_f32()
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        f16::to_f64(self)
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        f16::from_f64(v)
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        // Covers both +0 and -0.
        self.to_bits() & 0x7fff == 0
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f16::from_le_bytes(bytes.try_into().expect("2 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fp16_accumulates_in_fp32() {
        assert_eq!(Precision::Fp16.accumulation_bits(), 32);
        assert_eq!(std::mem::size_of::<<f16 as Element>::Acc>(), 4);
        assert_eq!(std::mem::size_of::<<f64 as Element>::Acc>(), 8);
    }

    #[test]
    fn tags_round_trip() {
        for p in Precision::ALL {
            assert_eq!(Precision::from_tag(p.tag()), Some(p));
            assert_eq!(p.as_str().parse::<Precision>().unwrap(), p);
        }
        assert_eq!(Precision::from_tag(9), None);
        assert!("bf16".parse::<Precision>().is_err());
    }

    #[test]
    fn fp16_products_are_exact_in_fp32() {
        // 11-bit significands multiply into at most 22 bits.
        let a = f16::from_f64(0.3330078125);
        let b = f16::from_f64(-0.9990234375);
        let exact = a.to_f64() * b.to_f64();
        assert_eq!((a.widen() * b.widen()) as f64, exact);
    }

    #[test]
    fn negative_zero_is_zero() {
        assert!(f16::NEG_ZERO.is_zero());
        assert!(Element::is_zero(-0.0f64));
    }
}
