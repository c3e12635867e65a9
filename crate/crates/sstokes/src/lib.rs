//! Stochastic Stokes equations on the unit square under the stress boundary
//! condition: MINI mixed finite elements in space, semi-implicit Euler in
//! time, truncated Q-Wiener noise, and a Monte Carlo harness that estimates
//! strong convergence rates against coupled fine-discretization references.

pub mod assemble;
pub mod config;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod noise;
pub mod quadrature;
pub mod semigroup;
pub mod solver;
pub mod space;
pub mod sparse;
pub mod svg;

pub use error::{Error, Result};
