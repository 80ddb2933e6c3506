//! Voronoi (circumcentric) dual of a Delaunay triangulation.
//!
//! Every primal vertex owns one control volume. Interior vertices own the
//! boxes proper; boundary vertices own cells truncated by the domain
//! boundary, whose boundary part is stored as [`BoundaryPatch`]es. Every
//! primal edge carries one [`BoxFace`].

use std::collections::{BTreeMap, HashMap};

use super::geom::{add, circumcenter, dist, dot, midpoint, norm, orient2d, scale, sub};
use super::tri::TriMesh;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxFace {
    pub i: usize,
    pub j: usize,
    /// |F_ij| (length in 2D, area in 3D).
    pub area: f64,
    /// Generator distance d_ij.
    pub d: f64,
    /// Unit normal pointing from box i to box j.
    pub normal: Point,
    /// Interpolation weight of box i.
    pub w: f64,
    /// |D_ij| = |F_ij| d_ij / d.
    pub diamond: f64,
    /// Face centroid.
    pub centroid: Point,
    /// Intersection of the generator segment with the face plane.
    pub cross_point: Point,
    /// Largest diameter of the primal cells sharing the edge (i, j).
    pub h_tri: f64,
    /// 2D only: end points, ordered counter-clockwise around box i.
    pub ends: Option<[Point; 2]>,
}

impl BoxFace {
    /// Interpolation weight seen from `k`, which must be `i` or `j`.
    pub fn weight_of(&self, k: usize) -> f64 {
        if k == self.i {
            self.w
        } else {
            1.0 - self.w
        }
    }

    /// Unit normal pointing out of box `k`.
    pub fn normal_from(&self, k: usize) -> Point {
        if k == self.i {
            self.normal
        } else {
            scale(&self.normal, -1.0)
        }
    }

    pub fn other(&self, k: usize) -> usize {
        if k == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// Part of a boundary cell's surface lying on the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatch {
    pub owner: usize,
    pub area: f64,
    /// Outward unit normal of the domain.
    pub normal: Point,
    pub centroid: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlVolume {
    pub generator: Point,
    pub volume: f64,
    /// Polygon centroid (diagnostics only; not available for imported 3D meshes).
    pub centroid: Option<Point>,
    pub faces: Vec<usize>,
    pub patches: Vec<usize>,
    pub on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMesh {
    pub dim: usize,
    pub primal: TriMesh,
    /// One control volume per primal vertex, same indexing.
    pub boxes: Vec<ControlVolume>,
    pub faces: Vec<BoxFace>,
    pub patches: Vec<BoundaryPatch>,
}

impl BoxMesh {
    pub fn n(&self) -> usize {
        self.boxes.len()
    }

    /// Number of boxes of interior vertices.
    pub fn n_interior_boxes(&self) -> usize {
        self.boxes.iter().filter(|b| !b.on_boundary).count()
    }

    pub fn interior_boxes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| !self.boxes[i].on_boundary)
    }

    /// Neighbour set G_i.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.boxes[i].faces.iter().map(|&f| self.faces[f].other(i)).collect()
    }

    /// Largest number of faces of a box (N_B).
    pub fn max_faces(&self) -> usize {
        self.boxes.iter().map(|b| b.faces.len()).max().unwrap_or(0)
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.boxes.iter().map(|b| b.volume).collect()
    }

    pub fn total_volume(&self) -> f64 {
        self.boxes.iter().map(|b| b.volume).sum()
    }

    /// Measure covered by interior boxes only.
    pub fn interior_volume(&self) -> f64 {
        self.boxes.iter().filter(|b| !b.on_boundary).map(|b| b.volume).sum()
    }

    /// Boundary remainder: measure of the truncated boundary cells.
    pub fn boundary_remainder(&self) -> f64 {
        self.boxes.iter().filter(|b| b.on_boundary).map(|b| b.volume).sum()
    }

    /// 2D fan triangles (generator, e0, e1) of box `i`, counter-clockwise.
    /// Their signed areas sum to the box volume.
    pub fn fan(&self, i: usize) -> Option<Vec<[Point; 3]>> {
        let g = self.boxes[i].generator;
        let mut out = Vec::with_capacity(self.boxes[i].faces.len());
        for &f in &self.boxes[i].faces {
            let face = &self.faces[f];
            let [a, b] = face.ends?;
            if face.i == i {
                out.push([g, a, b]);
            } else {
                out.push([g, b, a]);
            }
        }
        Some(out)
    }

    /// Check every geometric invariant of the dual to relative tolerance `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.n();
        if self.primal.n_vertices() != n {
            return Err(Error::InvalidMesh("box count differs from primal vertex count".into()));
        }
        let mut seen = HashMap::new();
        for (f, face) in self.faces.iter().enumerate() {
            if face.i >= n || face.j >= n || face.i == face.j {
                return Err(Error::InvalidMesh(format!("face {f} has invalid box indices")));
            }
            if seen.insert((face.i.min(face.j), face.i.max(face.j)), f).is_some() {
                return Err(Error::InvalidMesh(format!("face {f} duplicates a box pair")));
            }
            if !(face.area > 0.0) || !(face.d > 0.0) {
                return Err(Error::InvalidMesh(format!("face {f} has nonpositive area or distance")));
            }
            if !(face.w > 0.0 && face.w < 1.0) {
                return Err(Error::InvalidMesh(format!("face {f} weight {} outside (0,1)", face.w)));
            }
            let gi = self.boxes[face.i].generator;
            let gj = self.boxes[face.j].generator;
            let seg = sub(&gj, &gi);
            if (norm(&seg) - face.d).abs() > tol * face.d {
                return Err(Error::InvalidMesh(format!("face {f}: d_ij differs from generator distance")));
            }
            if (dot(&face.normal, &seg) / face.d - 1.0).abs() > tol || (norm(&face.normal) - 1.0).abs() > tol {
                return Err(Error::InvalidMesh(format!("face {f}: normal not parallel to generator segment")));
            }
            let expect = face.area * face.d / self.dim as f64;
            if (face.diamond - expect).abs() > tol * expect {
                return Err(Error::InvalidMesh(format!("face {f}: diamond measure mismatch")));
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.volume > 0.0) {
                return Err(Error::InvalidMesh(format!("box {i} has nonpositive volume")));
            }
            if dist(&b.generator, &self.primal.vertices[i]) > tol * (1.0 + norm(&b.generator)) {
                return Err(Error::InvalidMesh(format!("box {i} generator is not vertex {i}")));
            }
            if b.on_boundary != self.primal.boundary[i] {
                return Err(Error::InvalidMesh(format!("box {i} boundary flag mismatch")));
            }
            if !b.on_boundary && !b.patches.is_empty() {
                return Err(Error::InvalidMesh(format!("interior box {i} has boundary patches")));
            }
            let mut s = [0.0; 3];
            let mut scale_sum = 0.0;
            for &f in &b.faces {
                let face = self.faces.get(f).ok_or_else(|| Error::InvalidMesh(format!("box {i} references missing face {f}")))?;
                if face.i != i && face.j != i {
                    return Err(Error::InvalidMesh(format!("box {i} references foreign face {f}")));
                }
                s = add(&s, &scale(&face.normal_from(i), face.area));
                scale_sum += face.area;
            }
            for &p in &b.patches {
                let patch = self.patches.get(p).ok_or_else(|| Error::InvalidMesh(format!("box {i} references missing patch {p}")))?;
                s = add(&s, &scale(&patch.normal, patch.area));
                scale_sum += patch.area;
            }
            if norm(&s) > tol * scale_sum.max(f64::MIN_POSITIVE) * 10.0 {
                return Err(Error::InvalidMesh(format!("box {i} surface is not closed")));
            }
        }
        let mut refs = vec![0usize; self.faces.len()];
        for b in &self.boxes {
            for &f in &b.faces {
                refs[f] += 1;
            }
        }
        if let Some(f) = refs.iter().position(|&r| r != 2) {
            return Err(Error::InvalidMesh(format!("face {f} is not referenced by exactly two boxes")));
        }
        let total = self.total_volume();
        let omega = self.primal.measure();
        if (total - omega).abs() > tol * omega {
            return Err(Error::InvalidMesh(format!("box volumes sum to {total}, domain measure {omega}")));
        }
        Ok(())
    }
}

fn push_patches(patches: &mut Vec<BoundaryPatch>, v: &[Point], i: usize, j: usize, opposite: usize, perp: Point) {
    let outward = if orient2d(&v[i], &v[j], &v[opposite]) > 0.0 { scale(&perp, -1.0) } else { perp };
    let half = dist(&v[i], &v[j]) / 2.0;
    for (a, b) in [(i, j), (j, i)] {
        patches.push(BoundaryPatch {
            owner: a,
            area: half,
            normal: outward,
            centroid: add(&v[a], &scale(&sub(&v[b], &v[a]), 0.25)),
        });
    }
}

/// Build the circumcentric dual of a 2D Delaunay triangulation.
pub fn build_dual(primal: &TriMesh) -> Result<BoxMesh> {
    if primal.dim != 2 {
        return Err(Error::InvalidMesh("3D duals are supported through mesh import only".into()));
    }
    let violations = primal.delaunay_violations();
    if violations > 0 {
        return Err(Error::Delaunay(format!("primal mesh has {violations} empty-circle violations")));
    }
    let nt = primal.n_cells();
    let mut cc = Vec::with_capacity(nt);
    for c in 0..nt {
        cc.push(circumcenter(2, &primal.cell_points(c)).map_err(|e| Error::Construction {
            msg: e.to_string(),
            cells: vec![c],
        })?);
    }

    let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for c in 0..nt {
        let t = primal.cell(c);
        for k in 0..3 {
            let (a, b, o) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push((c, o));
        }
    }

    let n = primal.n_vertices();
    let v = &primal.vertices;
    let mut faces = Vec::with_capacity(edges.len());
    let mut patches = Vec::new();
    let mut bad_cells = Vec::new();
    for (&(i, j), adj) in &edges {
        if adj.len() > 2 {
            return Err(Error::Construction { msg: format!("edge ({i},{j}) shared by more than two triangles"), cells: adj.iter().map(|a| a.0).collect() });
        }
        let (pi, pj) = (v[i], v[j]);
        let d = dist(&pi, &pj);
        let t = scale(&sub(&pj, &pi), 1.0 / d);
        let perp = [-t[1], t[0], 0.0];
        let mid = midpoint(&pi, &pj);
        let mut left = mid;
        let mut right = mid;
        let mut h_tri: f64 = 0.0;
        for &(c, o) in adj {
            h_tri = h_tri.max(primal.cell_diameter(c));
            if orient2d(&pi, &pj, &v[o]) > 0.0 {
                left = cc[c];
            } else {
                right = cc[c];
            }
        }
        let area = dot(&sub(&left, &right), &perp);
        let on_boundary = adj.len() == 1;
        if on_boundary {
            push_patches(&mut patches, v, i, j, adj[0].1, perp);
        }
        // A right angle opposite a boundary edge collapses its face to a point;
        // the two boundary cells then simply do not touch.
        if on_boundary && area.abs() <= 1e-10 * h_tri {
            continue;
        }
        if !(area > 1e-10 * h_tri) {
            bad_cells.extend(adj.iter().map(|a| a.0));
            continue;
        }
        let w = dot(&sub(&pj, &right), &t) / d;
        faces.push(BoxFace {
            i,
            j,
            area,
            d,
            normal: t,
            w,
            diamond: area * d / 2.0,
            centroid: midpoint(&left, &right),
            cross_point: add(&pi, &scale(&t, (1.0 - w) * d)),
            h_tri,
            ends: Some([right, left]),
        });
    }
    if !bad_cells.is_empty() {
        bad_cells.sort_unstable();
        bad_cells.dedup();
        return Err(Error::Construction {
            msg: "nonpositive dual face (circumcenter outside domain or coincident circumcenters)".into(),
            cells: bad_cells,
        });
    }

    let mut boxes: Vec<ControlVolume> = (0..n)
        .map(|k| ControlVolume {
            generator: v[k],
            volume: 0.0,
            centroid: None,
            faces: Vec::new(),
            patches: Vec::new(),
            on_boundary: primal.boundary[k],
        })
        .collect();
    for (f, face) in faces.iter().enumerate() {
        boxes[face.i].faces.push(f);
        boxes[face.j].faces.push(f);
        boxes[face.i].volume += 0.5 * face.diamond;
        boxes[face.j].volume += 0.5 * face.diamond;
    }
    for (p, patch) in patches.iter().enumerate() {
        boxes[patch.owner].patches.push(p);
    }
    let mut mesh = BoxMesh { dim: 2, primal: primal.clone(), boxes, faces, patches };
    for k in 0..n {
        let fan = mesh.fan(k).expect("2D faces carry end points");
        let mut area = 0.0;
        let mut c = [0.0; 3];
        for [g, a, b] in &fan {
            let s = 0.5 * orient2d(g, a, b);
            area += s;
            c = add(&c, &scale(&add(&add(g, a), b), s / 3.0));
        }
        mesh.boxes[k].centroid = Some(scale(&c, 1.0 / area));
    }
    for (k, b) in mesh.boxes.iter().enumerate() {
        if !(b.volume > 0.0) {
            return Err(Error::Construction { msg: format!("control volume {k} has nonpositive measure"), cells: vec![] });
        }
    }
    Ok(mesh)
}
