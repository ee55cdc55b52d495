//! Second-moment analysis for multi-reference alignment over compact groups.

pub mod certify;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod rep;
pub mod rng;
pub mod solver;

pub use error::{MraError, Result};

pub type C64 = num_complex::Complex64;
