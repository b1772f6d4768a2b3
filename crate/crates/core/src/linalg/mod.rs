//! Linear algebra building blocks: sparse storage, banded factorizations for
//! the large 2D grids, and dense helpers for eigensolves at desk scale.

pub mod banded;
pub mod dense;
pub mod sparse;

pub use banded::{BandLu, BandMatrix, Scalar, SymBandMatrix};
pub use dense::CMat;
pub use sparse::CsrMatrix;
