//! Numerical verification of Whitham-type hierarchies built from
//! hypergeometric contour integrals in genus zero and genus one.

pub mod cli;
pub mod contours;
pub mod error;
pub mod genus0;
pub mod genus1;
pub mod hydro;
pub mod numerics;
pub mod tauflow;
pub mod theta;

pub use error::{Error, Result};
