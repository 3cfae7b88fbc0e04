//! Cutoff Chern-Simons perturbation terms and their fermionized counterparts on a
//! discretized flat 3-torus.

pub mod bounds;
pub mod error;
pub mod grassmann;
pub mod kernels;
pub mod lattice;
pub mod mollifier;
pub mod perturbation;
pub mod sum;

pub use error::{Error, Result};
pub use num_complex::Complex64;
