//! Low-rank matrix completion with nonconvex spectral regularizers.
//!
//! The unknown `m x n` matrix is parameterized as `P_m P_n^T` with `r`
//! columns, and the rank surrogate is a concave penalty applied to the
//! eigenvalues of the `r x r` Gram matrix `P_m^T P_m + P_n^T P_n`. Both
//! solvers alternate between the two factors and a closed-form reweighting
//! of that Gram matrix.

pub mod data;
pub mod dense;
pub mod error;
pub mod harness;
pub mod regularizer;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use regularizer::{ConcavePenalty, RegularizerKind, RegularizerSpec};
pub use sparse::{ObservationSet, Side};
