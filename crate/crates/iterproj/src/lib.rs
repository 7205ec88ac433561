//! Incompressible Navier-Stokes solver on box domains using a mixed
//! quadratic/linear tetrahedral discretization, second-order backward
//! differencing in time, and an iterative pressure-projection scheme for the
//! per-step saddle-point problem, together with spectral tooling that predicts
//! the iteration's convergence rate.

pub mod assembly;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod config;
pub mod march;
pub mod mesh;
pub mod modes;
pub mod output;
pub mod problems;
pub mod projector;
pub mod sparse;
pub mod spaces;

pub use error::{Error, Result};
