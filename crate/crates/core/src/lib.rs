pub mod cli;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod normalform;
pub mod pearling;
pub mod potential;
pub mod profile1d;
pub mod quadrature;
pub mod spectral1d;
pub mod tangential;
pub mod undulation2d;

pub use error::{FchError, Result};
