//! Pseudo-spectral solver for the Navier–Stokes–Allen–Cahn system with
//! microscopic inertia on the periodic unit torus, plus the diagnostics and
//! experiment harnesses used to check its energy and dissipation structure.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod spectral;
pub mod timestepper;

pub use error::{Error, Result};
