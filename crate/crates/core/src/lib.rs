//! Scattering zipper operators: unitary five-diagonal analogues of block
//! Jacobi matrices, with transfer-matrix, Weyl-disc, matrix-measure and
//! oscillation-theoretic tools.

pub mod error;
pub mod io;
pub mod matrix_core;
pub mod measures;
pub mod oscillation;
pub mod random;
pub mod scattering;
pub mod transfer;
pub mod verify;
pub mod weyl;
pub mod zipper;

pub use error::{Error, Result};
pub use matrix_core::CMatrix;
pub use scattering::ScatteringBlock;
pub use zipper::{BlockSource, Flavor, Zipper};
