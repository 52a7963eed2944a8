//! Embedded eigenvalues of a quantum layer with a perpendicular delta wire,
//! and the second-sheet resonance poles produced by a small surface impurity.

pub mod bs_operator;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod greens;
pub mod parallel;
pub mod quadrature;
pub mod resonance;
pub mod specfun;

pub use error::{Error, Result};
