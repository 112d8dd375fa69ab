//! Numerical gluing of SU(2) anti-self-dual connections on lattice charts.

// Guards written as `!(x > 0)` reject NaN on purpose; index loops mirror tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebra;
pub mod bundle;
pub mod calculus;
pub mod error;
pub(crate) mod fft;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod instanton;
pub mod io;
pub mod norms;
pub mod scalar;
pub mod solve;
pub mod spectral;
pub mod splice;
pub mod walls;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type ConnectionField64 = field::ConnectionField<f64>;
pub type SelfDualField64 = field::SelfDualField<f64>;
pub type LatticeChart64 = geometry::LatticeChart<f64>;
pub type Bundle64 = bundle::Bundle<f64>;

/// Single-precision aliases.
pub type ConnectionField32 = field::ConnectionField<f32>;
pub type SelfDualField32 = field::SelfDualField<f32>;
pub type LatticeChart32 = geometry::LatticeChart<f32>;
pub type Bundle32 = bundle::Bundle<f32>;
