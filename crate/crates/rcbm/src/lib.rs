//! Rhie-Chow stabilized Box Method for the steady Stokes problem.
//!
//! Piecewise-linear trial functions live on a Delaunay triangulation, test
//! functions are indicators of the control volumes of its Voronoi dual. The
//! crate builds the dual, assembles the discrete operators, solves the
//! stabilized saddle-point system (monolithic or SIMPLE), and runs the
//! spectral and manufactured-solution studies.

pub mod assembly;
pub mod error;
pub mod fields;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod spectral;

#[cfg(test)]
pub(crate) mod testkit;

pub use error::{Error, Result};

/// Points are stored with three coordinates; 2D meshes keep z = 0.
pub type Point = [f64; 3];
