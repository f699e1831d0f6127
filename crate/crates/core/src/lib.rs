//! Neural-integrated meshfree (NIM) solver for finite-strain hyperelasticity.
//!
//! Displacements (and, for inverse problems, Young's modulus) are
//! represented as small neural networks producing nodal coefficients that
//! are contracted against precomputed reproducing-kernel shape functions.
//! Training minimizes squared local Petrov–Galerkin residuals over
//! overlapping subdomains with L-BFGS.

pub mod discretization;
pub mod dual;
pub mod error;
pub mod experiments;
pub mod field;
pub mod io;
pub mod materials;
pub mod optimizer;
pub mod residual;
pub mod rk_basis;

pub use error::{Error, Result};
