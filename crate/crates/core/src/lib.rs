//! Spectral analysis of indefinite-weight elliptic operators `T = (1/r) ℓ`
//! discretized by finite differences: assembly, generalized eigensolves,
//! interface Dirichlet-to-Neumann functions and Krein-space diagnostics.

pub mod cli_io;
pub mod discretization;
pub mod dtn;
pub mod error;
pub mod krein;
pub mod linalg;
pub mod problem;
pub mod spectral;

pub use error::{Error, ErrorClass, Result};
