//! Sparse and dense linear-algebra kernels used by the FE and reduced models.

mod dense;
mod skyline;
mod sparse;

pub use dense::{generalized_eigen, orthonormality_defect};
pub use skyline::SkylineCholesky;
pub use sparse::CsrMatrix;
