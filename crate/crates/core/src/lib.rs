//! Robust deterministic control of convection–diffusion equations with
//! random coefficients.
//!
//! The pipeline: random coefficients enter through truncated Karhunen–Loève
//! expansions ([`kl`]), the stochastic dimension is discretized by an
//! orthonormal Legendre chaos basis ([`chaos`]), space by a symmetric
//! interior penalty DG scheme ([`assembly`]). The resulting optimality
//! system is a 3×3 block saddle-point operator with Kronecker structure
//! ([`kkt`]), solved either by a sparse direct factorization or by a
//! low-rank preconditioned GMRES working on factored matrices ([`lowrank`],
//! [`solver`]). Box constraints on the control are handled by a primal-dual
//! active set outer loop. [`postproc`] computes moments, objective values,
//! energy-norm errors and the built-in benchmark sweeps.

pub mod assembly;
pub mod chaos;
pub mod error;
pub mod fields;
pub mod kkt;
pub mod kl;
pub mod lowrank;
pub mod mesh;
pub mod postproc;
pub mod problems;
pub mod quadrature;
pub mod solver;

#[cfg(test)]
pub(crate) mod fixtures;

pub use error::{Error, Result};
pub use fields::{ScalarField, VectorField};
pub use mesh::{Mesh, Rect};
