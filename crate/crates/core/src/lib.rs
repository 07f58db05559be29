//! Spin-1/2 point interactions on the line.
//!
//! - [`extension`]: boundary-condition matrices of point interactions,
//!   including the spin-flip generators, and current-conservation checks.
//! - [`scattering`]: four-channel S-matrices from transfer matrices.
//! - [`device`]: chains of defects and free segments, and their spectra.
//! - [`bands`]: Bloch bands of periodic combs.
//!
//! Units: `ħ = 1`, `m = 1/2`, so `E = k²` and all lengths are dimensionless.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod device;
pub mod error;
pub mod extension;
pub mod scattering;

pub use error::{Error, Result};
pub use extension::{BoundaryMatrix, DefectSpec};
pub use scattering::{Channel, ScatteringMatrix};
