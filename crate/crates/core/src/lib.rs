//! Depth from focus with local and fractional nonlocal focus measures.

// Negated comparisons are used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod eval;
pub mod field;
pub mod focus;
pub mod frac1d;
pub mod io;
pub mod kernel2d;
pub mod quad;
pub mod synth;

pub use depth::DepthMap;
pub use error::{Error, Result};
pub use field::ScalarField;
pub use quad::QuadratureSpec;
