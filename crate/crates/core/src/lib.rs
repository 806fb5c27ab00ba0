//! Shape optimization of periodic two-phase microstructures.

pub mod coeff;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod homogenize;
pub mod fem;
pub mod mesh;
pub mod optimize;
pub mod report;
pub mod shapecalc;

pub use error::{Error, Result};
