//! Small dense and banded linear algebra kernels.

mod banded;
mod symeig;

pub use banded::{BandedCholesky, BandedSym};
pub use symeig::{sym_eigen, SymEigen};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("QL iteration did not converge for eigenvalue {index}")]
    NoConvergence { index: usize },
}
