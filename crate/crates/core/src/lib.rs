//! Spectral laboratory for norm inflation in semilinear Schrödinger equations.
//!
//! Sparse frequency-domain data, exact-in-time Picard iterates, the norms used
//! to measure inflation, resonance enumeration, parameter schedules and an
//! independent pseudospectral reference solver.

pub mod error;
pub mod exppoly;
pub mod lattice;
pub mod norms;
pub mod picard;
pub mod resonance;
pub mod scenarios;
pub mod solver;

pub use error::{InflateError, Result};
