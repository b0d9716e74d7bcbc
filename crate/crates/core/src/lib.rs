//! Hybrid-format sparse × dense matrix multiplication.
//!
//! A sparse matrix is split by rows into a CSR part, multiplied with a
//! row-wise AXPY kernel, and a vector-wise BCSR part of `lanes x 1` tiles,
//! multiplied with an outer-product tile engine. Both parts run
//! concurrently on separate worker groups. A least-squares performance
//! model picks the thread split and a closed-form balance equation picks
//! the row boundary.
//!
//! Modules:
//!
//! - [`sparse`]: CSR and dense types, Matrix Market I/O, reference product.
//! - [`format`]: the hybrid layout, conversion, and its binary dump.
//! - [`engine`]: portable outer-product tile engine (FP64/FP32/FP16).
//! - [`kernels`]: CSR, BCSR and FP16 BCSR kernels plus the hybrid dispatcher.
//! - [`scheduler`]: calibration, model fit, thread selection, row split.
//! - [`bench`], [`verify`]: measurement and oracle harnesses.

pub mod bench;
pub mod engine;
pub mod error;
pub mod format;
pub mod kernels;
pub mod precision;
pub mod scheduler;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use half::f16;
pub use precision::{Accum, Element, Precision};
