//! Tamed Euler finite-difference scheme for the stochastic heat equation on
//! the torus with a distributional drift, plus the tooling needed to measure
//! its strong convergence rate.

pub mod besov;
pub mod coupling;
pub mod drift;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod heat;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod scheme;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{make_grid, GridConfig, Ratio};
