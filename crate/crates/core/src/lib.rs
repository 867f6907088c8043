//! Degenerate self-similar measures on `[0, 1]`, the spectra of Green-kernel
//! integral operators weighted by them, and small-deviation estimates for the
//! associated Gaussian quadratic forms.
//!
//! The pipeline runs bottom-up:
//!
//! * [`measure`] builds the atomic measure exactly (rational arithmetic);
//! * [`kernel`] evaluates covariance kernels of the process catalog;
//! * [`spectrum`] assembles the weighted Gram matrix and diagonalizes it in
//!   extended precision;
//! * [`smallball`] turns a spectrum into `ln P{‖X‖ ≤ ε}` estimates.

pub mod error;
pub mod kernel;
pub mod measure;
pub mod ratio;
pub mod rng;
pub mod smallball;
pub mod spectrum;
pub mod xprec;

pub use error::{Error, Result};
