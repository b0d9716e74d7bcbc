//! Core matrix types, Matrix Market I/O, random generation, and the dense
//! reference product every kernel is checked against.

mod csr;
mod dense;
mod mtx;
mod random;
mod reference;

pub use csr::{CooEntry, CsrMatrix};
pub use dense::DenseMatrix;
pub use mtx::{parse_matrix_market, parse_matrix_market_with_limit, write_matrix_market, DEFAULT_MAX_DIM};
pub use random::{random_dense, random_sparse};
pub use reference::reference_spmm;
