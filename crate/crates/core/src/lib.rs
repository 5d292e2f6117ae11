//! Discrete fractional p-Laplacian toolkit.
//!
//! Functions live on uniform lattices ([`grid`]); the Gagliardo kernel is
//! discretized into translation-invariant pair weights ([`operator`]); exterior
//! value problems are solved by minimizing the strictly convex energy
//! ([`solver`]); comparison principles, scaling and level-set geometry are then
//! verified numerically ([`principles`], [`geometry`]).

pub mod error;
pub mod geometry;
pub mod grid;
pub mod operator;
pub mod powerlib;
pub mod principles;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
