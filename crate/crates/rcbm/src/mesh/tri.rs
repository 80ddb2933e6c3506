//! Primal simplicial meshes and the structured Delaunay generator.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geom::{circumcenter, diameter, dist, orient2d, signed_measure};
use crate::{Error, Point, Result};

/// Primal conforming triangulation (tetrahedra for imported 3D meshes).
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    /// Flat simplex connectivity with stride `dim + 1`.
    pub cells: Vec<usize>,
    pub boundary: Vec<bool>,
}

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Rect::new(lo, lo, hi, hi)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl TriMesh {
    /// Build from raw data, checking index ranges and simplex orientation.
    pub fn new(dim: usize, vertices: Vec<Point>, cells: Vec<usize>, boundary: Vec<bool>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension {dim} not supported")));
        }
        if cells.len() % (dim + 1) != 0 {
            return Err(Error::InvalidMesh("cell connectivity length not a multiple of d+1".into()));
        }
        if boundary.len() != vertices.len() {
            return Err(Error::InvalidMesh("boundary flag count differs from vertex count".into()));
        }
        if let Some(&bad) = cells.iter().find(|&&v| v >= vertices.len()) {
            return Err(Error::InvalidMesh(format!("cell references missing vertex {bad}")));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mesh = TriMesh { dim, vertices, cells, boundary };
        let bad: Vec<usize> = (0..mesh.n_cells()).filter(|&c| !(mesh.cell_measure(c) > 0.0)).collect();
        if !bad.is_empty() {
            return Err(Error::Construction {
                msg: "cells with nonpositive signed measure".into(),
                cells: bad,
            });
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.cells[c * s..(c + 1) * s]
    }

    pub fn cell_points(&self, c: usize) -> Vec<Point> {
        self.cell(c).iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        signed_measure(self.dim, &self.cell_points(c))
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        diameter(&self.cell_points(c))
    }

    pub fn measure(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_measure(c)).sum()
    }

    /// Largest cell diameter h.
    pub fn h(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    /// Smallest cell diameter h_m.
    pub fn h_min(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_diameter(c)).fold(f64::INFINITY, f64::min)
    }

    pub fn n_interior(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Number of (cell, neighbour vertex) pairs that violate the empty
    /// circumsphere property across a shared facet.
    pub fn delaunay_violations(&self) -> usize {
        let d = self.dim;
        let mut facets: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
        for c in 0..self.n_cells() {
            let cell = self.cell(c);
            for skip in 0..=d {
                let mut key: Vec<usize> = (0..=d).filter(|&k| k != skip).map(|k| cell[k]).collect();
                key.sort_unstable();
                facets.entry(key).or_default().push((c, cell[skip]));
            }
        }
        let mut count = 0;
        for pair in facets.values() {
            if pair.len() != 2 {
                continue;
            }
            for (a, b) in [(0, 1), (1, 0)] {
                let (c, _) = pair[a];
                let (_, opp) = pair[b];
                let pts = self.cell_points(c);
                if let Ok(cc) = circumcenter(d, &pts) {
                    let r = dist(&cc, &pts[0]);
                    if dist(&cc, &self.vertices[opp]) < r * (1.0 - 1e-10) {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Boundary facets as (sorted vertex list, owning cell).
    pub fn boundary_facets(&self) -> Vec<(Vec<usize>, usize)> {
        let d = self.dim;
        let mut facets: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for c in 0..self.n_cells() {
            let cell = self.cell(c);
            for skip in 0..=d {
                let mut key: Vec<usize> = (0..=d).filter(|&k| k != skip).map(|k| cell[k]).collect();
                key.sort_unstable();
                facets.entry(key).or_insert((c, 0)).1 += 1;
            }
        }
        let mut out: Vec<(Vec<usize>, usize)> =
            facets.into_iter().filter(|(_, (_, n))| *n == 1).map(|(k, (c, _))| (k, c)).collect();
        out.sort();
        out
    }
}

/// Structured Delaunay triangulation of a rectangle.
///
/// Rows of vertices alternate between a full row (spacing dx) and an offset
/// row (spacing dx, shifted by dx/2, with both end points added), which gives
/// near-equilateral triangles inside and right triangles along the vertical
/// sides. With `jitter > 0` the interior vertices are perturbed by up to
/// `jitter * dx / 5` per coordinate and the triangulation is restored to
/// Delaunay by edge flips.
pub fn triangulate_square(domain: Rect, target_h: f64, jitter: f64, seed: u64) -> Result<TriMesh> {
    let lx = domain.x1 - domain.x0;
    let ly = domain.y1 - domain.y0;
    if !(target_h > 0.0) || !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::InvalidMesh("target_h and domain extents must be positive".into()));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::InvalidMesh(format!("jitter {jitter} outside [0, 1)")));
    }
    let nx = ((lx / target_h).ceil() as usize).max(3);
    let dx = lx / nx as f64;
    let rows = 2 * ((ly / (3f64.sqrt() * dx)).ceil() as usize).max(1);
    let dy = ly / rows as f64;
    if dy < 0.55 * dx {
        return Err(Error::InvalidMesh(format!(
            "domain aspect too thin for target_h: row spacing {dy} vs column spacing {dx}"
        )));
    }

    let mut vertices = Vec::new();
    let mut boundary = Vec::new();
    let mut row_ids: Vec<Vec<usize>> = Vec::with_capacity(rows + 1);
    for r in 0..=rows {
        let y = if r == rows { domain.y1 } else { domain.y0 + r as f64 * dy };
        let xs: Vec<f64> = if r % 2 == 0 {
            (0..=nx)
                .map(|i| if i == nx { domain.x1 } else { domain.x0 + i as f64 * dx })
                .collect()
        } else {
            let mut xs = vec![domain.x0];
            xs.extend((0..nx).map(|i| domain.x0 + (i as f64 + 0.5) * dx));
            xs.push(domain.x1);
            xs
        };
        let mut ids = Vec::with_capacity(xs.len());
        let last = xs.len() - 1;
        for (k, x) in xs.into_iter().enumerate() {
            ids.push(vertices.len());
            vertices.push([x, y, 0.0]);
            boundary.push(r == 0 || r == rows || k == 0 || k == last);
        }
        row_ids.push(ids);
    }

    let mut tris: Vec<[usize; 3]> = Vec::new();
    for r in 0..rows {
        zip_rows(&vertices, &row_ids[r], &row_ids[r + 1], &mut tris);
    }

    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = jitter * dx / 5.0;
        for (v, b) in vertices.iter_mut().zip(&boundary) {
            if !*b {
                v[0] += amp * rng.random_range(-1.0..=1.0);
                v[1] += amp * rng.random_range(-1.0..=1.0);
            }
        }
        for (t, tri) in tris.iter().enumerate() {
            if orient2d(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]) <= 0.0 {
                return Err(Error::Delaunay(format!("jitter inverted triangle {t}")));
            }
        }
        lawson_flip(&vertices, &mut tris)?;
    }

    let cells: Vec<usize> = tris.iter().flatten().copied().collect();
    let mesh = TriMesh::new(2, vertices, cells, boundary)?;
    let violations = mesh.delaunay_violations();
    if violations > 0 {
        return Err(Error::Delaunay(format!("{violations} empty-circle violations remain")));
    }
    Ok(mesh)
}

/// Triangulate the strip between two sorted rows, zipper style: advance the
/// lower row unless that triangle's circumcircle would contain the next
/// upper vertex.
fn zip_rows(v: &[Point], lower: &[usize], upper: &[usize], tris: &mut Vec<[usize; 3]>) {
    let (mut a, mut b) = (0, 0);
    while a + 1 < lower.len() || b + 1 < upper.len() {
        let advance_lower = if a + 1 >= lower.len() {
            false
        } else if b + 1 >= upper.len() {
            true
        } else {
            !in_circle(v, &[lower[a], lower[a + 1], upper[b]], upper[b + 1])
        };
        if advance_lower {
            tris.push([lower[a], lower[a + 1], upper[b]]);
            a += 1;
        } else {
            tris.push([lower[a], upper[b + 1], upper[b]]);
            b += 1;
        }
    }
}

fn in_circle(v: &[Point], tri: &[usize; 3], p: usize) -> bool {
    let pts = [v[tri[0]], v[tri[1]], v[tri[2]]];
    match circumcenter(2, &pts) {
        Ok(cc) => dist(&cc, &v[p]) < dist(&cc, &pts[0]) * (1.0 - 1e-10),
        Err(_) => false,
    }
}

/// Lawson's edge-flip algorithm on a counter-clockwise triangulation.
fn lawson_flip(v: &[Point], tris: &mut [[usize; 3]]) -> Result<()> {
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            edge_owner.insert((tri[k], tri[(k + 1) % 3]), t);
        }
    }
    let mut stack: Vec<(usize, usize)> = edge_owner.keys().copied().filter(|(a, b)| a < b).collect();
    stack.sort_unstable();
    let max_flips = 50 * tris.len() + 100;
    let mut flips = 0;
    while let Some((a, b)) = stack.pop() {
        let (Some(&t1), Some(&t2)) = (edge_owner.get(&(a, b)), edge_owner.get(&(b, a))) else {
            continue;
        };
        let c = third(&tris[t1], a, b);
        let d = third(&tris[t2], b, a);
        if !in_circle(v, &tris[t1], d) {
            continue;
        }
        // Quad a, d, b, c is convex when the flip is needed.
        if orient2d(&v[a], &v[d], &v[c]) <= 0.0 || orient2d(&v[d], &v[b], &v[c]) <= 0.0 {
            continue;
        }
        flips += 1;
        if flips > max_flips {
            return Err(Error::Delaunay("edge flipping did not terminate".into()));
        }
        for tri in [tris[t1], tris[t2]] {
            for k in 0..3 {
                edge_owner.remove(&(tri[k], tri[(k + 1) % 3]));
            }
        }
        tris[t1] = [a, d, c];
        tris[t2] = [d, b, c];
        for t in [t1, t2] {
            let tri = tris[t];
            for k in 0..3 {
                edge_owner.insert((tri[k], tri[(k + 1) % 3]), t);
            }
        }
        for (p, q) in [(a, d), (d, b), (b, c), (c, a)] {
            stack.push((p.min(q), p.max(q)));
        }
    }
    Ok(())
}

fn third(tri: &[usize; 3], a: usize, b: usize) -> usize {
    *tri.iter().find(|&&x| x != a && x != b).expect("triangle has three distinct vertices")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_coarse_grid_is_delaunay() {
        let m = triangulate_square(Rect::square(0.0, 1.0), 0.5, 0.0, 0).unwrap();
        assert_eq!(m.delaunay_violations(), 0);
        assert!(m.n_vertices() >= 16 && m.n_vertices() <= 30);
        assert!((m.measure() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn structured_h_is_bounded_by_target() {
        let m = triangulate_square(Rect::square(-1.0, 1.0), 0.025, 0.0, 0).unwrap();
        assert!(m.h() <= 0.025 * 2f64.sqrt());
        assert!(m.h() <= 0.025 * (1.0 + 1e-12));
    }

    #[test]
    fn boundary_flags_match_geometry() {
        let r = Rect::new(-0.25, -0.25, 0.25, 0.25);
        let m = triangulate_square(r, 0.1, 0.3, 7).unwrap();
        for (v, b) in m.vertices.iter().zip(&m.boundary) {
            let on = v[0] == r.x0 || v[0] == r.x1 || v[1] == r.y0 || v[1] == r.y1;
            assert_eq!(on, *b);
        }
        let mut on_facets = vec![false; m.n_vertices()];
        for (f, _) in m.boundary_facets() {
            for v in f {
                on_facets[v] = true;
            }
        }
        assert_eq!(on_facets, m.boundary);
    }

    #[test]
    fn jitter_never_emits_a_violating_mesh() {
        for seed in 0..20 {
            match triangulate_square(Rect::square(0.0, 1.0), 0.2, 0.9, seed) {
                Ok(m) => assert_eq!(m.delaunay_violations(), 0),
                Err(e) => assert!(matches!(e, Error::Delaunay(_))),
            }
        }
    }

    #[test]
    fn jitter_is_deterministic() {
        let a = triangulate_square(Rect::square(0.0, 1.0), 0.1, 0.5, 42).unwrap();
        let b = triangulate_square(Rect::square(0.0, 1.0), 0.1, 0.5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(triangulate_square(Rect::square(0.0, 1.0), 0.0, 0.0, 0).is_err());
        assert!(triangulate_square(Rect::square(0.0, 1.0), 0.1, 1.0, 0).is_err());
    }
}
