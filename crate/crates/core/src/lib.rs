//! Lagom projections, compact Calderón-Zygmund kernels and the numerical
//! machinery to test them on finite dyadic grids.

pub mod bump;
pub mod config;
pub mod czd;
pub mod diagnostics;
pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod operator;
pub mod paraproduct;
pub mod stats;
pub mod sum;
pub mod wavelet;

pub use dyadic::{Dyadic, Rational};
pub use error::{LagomError, Result};
