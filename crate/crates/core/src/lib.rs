//! Bifurcation control for the cubic-quintic Allen-Cahn equation on 2D triangle meshes.
//!
//! The crate computes bifurcation diagrams with deflated and pseudo-arclength
//! continuation, locates simple branch points through the Moore-Spence augmented
//! system, and moves mesh vertices by gradient-based shape optimization until a
//! selected branch point sits at a target parameter value.
//!
//! Modules, bottom-up:
//! - [`sparse`]: compressed-row matrices, sparse LU, shift-invert eigensolver.
//! - [`mesh`]: triangle meshes, generators, deformation and JSON I/O.
//! - [`assembly`]: P1 discretization of the residual and all derivatives.
//! - [`continuation`]: Newton, deflation, deflated and arclength continuation.
//! - [`moore_spence`]: the augmented system, its Newton solver and seeding.
//! - [`shape`]: objective, adjoint shape gradient, Riesz smoothing, optimizer.

pub mod assembly;
pub mod continuation;
pub mod error;
pub mod field;
pub mod mesh;
pub mod moore_spence;
pub mod shape;
pub mod sparse;
#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use field::{Field, VertexField};
pub use mesh::TriMesh;
pub use sparse::SparseMatrix;
