//! Primal triangulations, their Voronoi duals, quality diagnostics and the
//! mesh file format.

pub mod dual;
pub mod geom;
pub mod io;
pub mod quality;
pub mod tri;

pub use dual::{build_dual, BoundaryPatch, BoxFace, BoxMesh, ControlVolume};
pub use geom::circumcenter;
pub use quality::{quality_report, MeshQualityReport, QualityThresholds};
pub use tri::{triangulate_square, Rect, TriMesh};
