//! Gaussian random field sampling by circulant embedding, with optional
//! spectral-truncation smoothing, and Monte Carlo / multilevel Monte Carlo
//! estimators for a two-dimensional log-normal Darcy flow problem.

#[cfg(test)]
extern crate self as oscfield;

pub mod covariance;
pub mod embedding;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fem;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
