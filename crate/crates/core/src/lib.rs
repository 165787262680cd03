//! Atoms coupled through a one-dimensional photonic crystal waveguide.
//!
//! * [`photonic`]: transfer matrices, band structure, finite-stack response
//!   and the emitter Green's function.
//! * [`spin`]: the N-atom coupling matrix and transmission formulas.
//! * [`ensemble`]: position and Poisson atom-number averaging.
//! * [`decay`]: superradiant fluorescence decay and N̄ inference.
//! * [`fit`]: damped least squares and the model-specific fitters.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decay;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod photonic;
pub mod spectrum;
pub mod spin;
pub mod units;

pub use error::{Error, Result};
