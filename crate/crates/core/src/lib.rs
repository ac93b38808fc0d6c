//! Magnetic Bloch band toolkit.
//!
//! Periodic Schrödinger operator on a 2D Bravais lattice, its lowest Bloch
//! band, the associated Wannier function, the magnetic (Peierls-substituted)
//! effective matrix obtained in a weak, slowly varying field, and spectral
//! diagnostics comparing the resulting islands with Landau levels.

extern crate openblas_src;

pub mod bloch;
pub mod effective;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod phase;
pub mod pipeline;
pub mod report;
pub mod spectral;
pub mod wannier;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
