//! Tensor-free solvers for bilinear and quadratic inverse problems.
//!
//! The unknown is lifted to a tensor `w` (a matrix `u v*` or `u u*` in the
//! unrelaxed case), the rank constraint is relaxed to a nuclear norm, and
//! the resulting convex problem is solved by proximal primal-dual
//! iterations. The tensor is only ever stored through a low-rank
//! factorization and accessed through its left and right actions, so the
//! cost per iteration scales with the rank instead of the squared problem
//! size. Masked Fourier phase retrieval is included as a complete
//! application.

extern crate self as liftkit;

pub mod bench;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lowrank;
pub mod metric;
pub mod operators;
pub mod partial_svd;
pub mod phase_retrieval;
pub mod solver;
pub mod thresholding;

#[cfg(test)]
#[path = "../tests/support/oracle.rs"]
mod testutil;

pub use error::{Error, Result};
pub use linalg::{CVec, C64};
pub use lowrank::{FactoredTensor, HermitianFactored};
pub use metric::Metric;
