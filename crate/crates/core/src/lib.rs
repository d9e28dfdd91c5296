//! Demagnetization potential by heat-semigroup regularization plus a
//! single-layer boundary correction.
//!
//! The potential `u` of a magnetization `M` on `Ω` is assembled from two
//! uncoupled pieces: `v`, the solution of `-Δv = F - e^{TΔ}F` on an enlarged
//! box `[-R, R]^d` with zero walls (`F = -div M`), and `b`, the harmonic
//! function on `Ω` whose boundary values are the single-layer potential of
//! the surface charge `M·n`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bem;
pub mod error;
pub mod experiments;
pub mod expm;
pub mod grid;
pub mod hybrid;
pub mod laplace;
pub mod oracle;
pub mod spectral;
mod vecops;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, Subdomain, VectorField};
pub use hybrid::{SolverConfig, TimeRule};
