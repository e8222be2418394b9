//! Particle and grid solvers for the Euler-alignment system with matrix-valued
//! communication `D²K`, together with the measure-theoretic tooling needed to
//! compare them.

pub mod error;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod measures;
pub mod particles;
pub mod rng;
mod spline;
pub mod stability;
pub mod transport;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelFamily, KernelSpec};
pub use measures::AtomicMeasure;
