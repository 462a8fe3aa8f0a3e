//! Numerical laboratory for nonlocal double-integral functionals on boxes in R^N, N in {1,2,3}.
//!
//! The crate evaluates window-limited epsilon-family functionals (`functionals`), geometric
//! integration primitives with singular kernels (`quadrature`), oscillation blow-up machinery
//! and point classifiers (`oscillation`), jump-interface detection and the dimensional-constant
//! jump inequality (`jumps`), and a constructive good-set/Holder-extension pipeline (`lusin`),
//! over scalar- or vector-valued fields sampled at cell centers of uniform grids (`fields`).
//!
//! Conventions shared by every module:
//! - fields are sampled at cell centers; every integral is a midpoint-rule sum;
//! - a cell belongs to a ball stencil iff its center lies strictly inside the ball;
//! - limits in a radius are proxied by trailing-window statistics over geometric schedules;
//! - all reductions are deterministic: fixed chunk decomposition, compensated summation,
//!   results independent of the worker-thread count.

pub mod error;
pub mod fields;
pub mod functionals;
pub mod jumps;
mod kahan;
pub mod lusin;
pub mod oscillation;
pub mod quadrature;

pub use error::{Error, Result};
