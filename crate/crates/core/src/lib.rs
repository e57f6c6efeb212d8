//! Numerical laboratory for damped Euler-alignment particle dynamics, the
//! overdamped (large-friction) limit system, and the transport/entropy error
//! functionals that quantify convergence between the two.

pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod harness;
pub mod kernels;
pub mod limit;
pub mod metrics;

pub use error::{Error, Result};
