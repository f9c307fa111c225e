//! Amplitude Flow phase retrieval with Gaussian measurements, plus the
//! numerical machinery used to probe its concentration assumptions.

pub mod concentration;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
