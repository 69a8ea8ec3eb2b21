//! Least-squares solvers used by tracking and contact estimation.

pub mod lsqr;
pub mod nnls;
pub mod sparse;

pub use lsqr::{lsqr, solve_least_squares, LsqrOptions, LsqrResult, StopReason};
pub use nnls::{nnls, nnls_partial};
pub use sparse::CsrMatrix;
