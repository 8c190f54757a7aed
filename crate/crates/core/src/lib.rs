//! Optimizer geometries, oracle solutions and verification experiments for
//! studying which global minimizer (or limit direction) first-order methods
//! select on underdetermined regression and separable classification.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod oracles;
pub mod problems;

pub use error::{Error, Result};
