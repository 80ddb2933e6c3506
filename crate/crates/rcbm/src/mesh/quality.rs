//! Mesh quality diagnostics.

use serde::Serialize;

use super::dual::BoxMesh;

/// Optional lower bounds on the per-face shape ratios.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QualityThresholds {
    pub min_distance_ratio: f64,
    pub min_area_ratio: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds { min_distance_ratio: 0.05, min_area_ratio: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshQualityReport {
    pub dim: usize,
    pub vertices: usize,
    pub cells: usize,
    pub boxes: usize,
    pub h: f64,
    pub h_m: f64,
    pub delta: f64,
    /// Extremes of d_ij / h_tri.
    pub distance_ratio: (f64, f64),
    /// Extremes of |F_ij| / h_tri^(d-1).
    pub area_ratio: (f64, f64),
    /// Extremes of |B_i| / h_i^d with h_i the largest h_tri around box i.
    pub volume_ratio: (f64, f64),
    pub delaunay_violations: usize,
    pub flagged_faces: Vec<usize>,
    pub valid: bool,
}

pub fn quality_report(mesh: &BoxMesh, thresholds: QualityThresholds) -> MeshQualityReport {
    let d = mesh.dim as i32;
    let mut dr = (f64::INFINITY, 0.0f64);
    let mut ar = (f64::INFINITY, 0.0f64);
    let mut flagged = Vec::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        let r1 = face.d / face.h_tri;
        let r2 = face.area / face.h_tri.powi(d - 1);
        dr = (dr.0.min(r1), dr.1.max(r1));
        ar = (ar.0.min(r2), ar.1.max(r2));
        if r1 < thresholds.min_distance_ratio || r2 < thresholds.min_area_ratio {
            flagged.push(f);
        }
    }
    let mut vr = (f64::INFINITY, 0.0f64);
    for b in &mesh.boxes {
        let hi = b.faces.iter().map(|&f| mesh.faces[f].h_tri).fold(0.0, f64::max);
        if hi > 0.0 {
            let r = b.volume / hi.powi(d);
            vr = (vr.0.min(r), vr.1.max(r));
        }
    }
    let fix = |p: (f64, f64)| if p.0.is_finite() { p } else { (0.0, 0.0) };
    let h = mesh.primal.h();
    let h_m = mesh.primal.h_min();
    let boxes = mesh.n_interior_boxes();
    let delaunay_violations = mesh.primal.delaunay_violations();
    MeshQualityReport {
        dim: mesh.dim,
        vertices: mesh.primal.n_vertices(),
        cells: mesh.primal.n_cells(),
        boxes,
        h,
        h_m,
        delta: if h > 0.0 { h_m / h } else { 0.0 },
        distance_ratio: fix(dr),
        area_ratio: fix(ar),
        volume_ratio: fix(vr),
        delaunay_violations,
        valid: boxes > 0 && delaunay_violations == 0 && flagged.is_empty(),
        flagged_faces: flagged,
    }
}
