//! Source coding via symbolic dynamical systems over the unit interval and
//! unit square: exact-rational interval dynamics, lossless compression by
//! trajectory reversal, lossy compression with feedforward, and a seeded
//! Monte Carlo verification harness.

pub mod error;
pub mod exact;
pub mod harness;
pub mod interval;
pub mod lossless;
pub mod lossy;
pub mod serialize;
pub mod source;

pub use error::{Error, Result};
pub use exact::Rat;
