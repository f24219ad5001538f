//! Boundary-domain integral equation solver for the Dirichlet problem of the
//! compressible Stokes system with variable viscosity.

pub mod bdie;
pub mod error;
pub mod expr;
pub mod fields;
pub mod geom;
pub mod integrate;
pub mod kernels;
pub mod mesh;
pub mod potentials;
pub mod quadrature;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
