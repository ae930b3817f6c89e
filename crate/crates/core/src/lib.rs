//! Unfitted finite element solver for the Poisson problem on implicitly
//! defined domains.
//!
//! The domain is given by a level set that cuts arbitrarily through a
//! structured background triangulation. The computational domain is the
//! polygon bounded by the zero isoline of the piecewise linear interpolant
//! of the level set. Dirichlet data on the exact boundary is imposed weakly
//! with Nitsche's method, where the trace of the discrete solution on the
//! exact boundary is approximated by a Taylor expansion from the polygonal
//! boundary. A face-based ghost penalty keeps the system stable and well
//! conditioned independent of how the boundary cuts the mesh.
//!
//! Modules, bottom-up:
//!
//! * [`geometry`]: level sets, normals and the projection onto the exact boundary.
//! * [`mesh`]: background mesh, element classification, cut cells and ghost faces.
//! * [`femcore`]: Lagrange elements of order 1 to 3, quadrature and dof numbering.
//! * [`assembly`]: the bilinear and linear forms.
//! * [`linsolve`]: sparse storage, GMRES, direct factorizations and condition estimates.
//! * [`study`]: error norms, convergence studies, file output and the CLI.

pub mod assembly;
pub mod error;
pub mod femcore;
pub mod geometry;
pub mod linsolve;
pub mod mesh;
pub mod study;

pub use error::{Error, Result};
pub use geometry::{LevelSet, Vec2};
