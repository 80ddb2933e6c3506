//! Nodal (piecewise-linear) and box (piecewise-constant) fields, the lumping
//! map and the discrete norms.

use crate::mesh::geom::{barycentric_gradients, dot};
use crate::mesh::BoxMesh;
use crate::Point;

/// Piecewise-linear scalar field given by its vertex values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

/// Piecewise-constant field, one value per control volume.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        NodalField { values }
    }

    pub fn zeros(n: usize) -> Self {
        NodalField { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl BoxField {
    pub fn new(values: Vec<f64>) -> Self {
        BoxField { values }
    }
}

/// Lumping map: each box takes the nodal value at its generator.
pub fn lump(mesh: &BoxMesh, f: &NodalField) -> BoxField {
    assert_eq!(f.len(), mesh.n());
    BoxField { values: f.values.clone() }
}

/// Nodal samples of a scalar function.
pub fn interpolate(mesh: &BoxMesh, fun: impl Fn(&Point) -> f64) -> NodalField {
    NodalField { values: mesh.primal.vertices.iter().map(&fun).collect() }
}

/// Nodal samples of a vector function, one field per component.
pub fn interpolate_vector(mesh: &BoxMesh, fun: impl Fn(&Point) -> Point) -> Vec<NodalField> {
    let samples: Vec<Point> = mesh.primal.vertices.iter().map(&fun).collect();
    (0..mesh.dim).map(|c| NodalField { values: samples.iter().map(|s| s[c]).collect() }).collect()
}

/// |q|_* = ( sum_F d |F| ((q_j - q_i)/d)^2 )^(1/2).
pub fn star_seminorm(mesh: &BoxMesh, q: &NodalField) -> f64 {
    mesh.faces
        .iter()
        .map(|f| {
            let g = (q.values[f.j] - q.values[f.i]) / f.d;
            f.d * f.area * g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// |q|_{tri,*}: the *-seminorm with the extra face weight h_tri^3.
pub fn tri_star_seminorm(mesh: &BoxMesh, q: &NodalField) -> f64 {
    mesh.faces
        .iter()
        .map(|f| {
            let g = (q.values[f.j] - q.values[f.i]) / f.d;
            f.h_tri.powi(3) * f.d * f.area * g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// Gradient of a P1 field on primal cell `c`.
pub fn cell_gradient(mesh: &BoxMesh, c: usize, v: &NodalField) -> Point {
    let p = &mesh.primal;
    let grads = barycentric_gradients(p.dim, &p.cell_points(c)).expect("valid primal cell");
    let mut g = [0.0; 3];
    for (k, &vert) in p.cell(c).iter().enumerate() {
        for a in 0..3 {
            g[a] += v.values[vert] * grads[k][a];
        }
    }
    g
}

pub fn h1_seminorm(mesh: &BoxMesh, v: &NodalField) -> f64 {
    (0..mesh.primal.n_cells())
        .map(|c| {
            let g = cell_gradient(mesh, c, v);
            mesh.primal.cell_measure(c) * dot(&g, &g)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn h1_seminorm_vec(mesh: &BoxMesh, v: &[NodalField]) -> f64 {
    v.iter().map(|c| h1_seminorm(mesh, c).powi(2)).sum::<f64>().sqrt()
}

/// Exact L2 norm of a P1 field (element mass matrix).
pub fn l2_norm(mesh: &BoxMesh, v: &NodalField) -> f64 {
    let p = &mesh.primal;
    let d = p.dim as f64;
    (0..p.n_cells())
        .map(|c| {
            let vals: Vec<f64> = p.cell(c).iter().map(|&k| v.values[k]).collect();
            let s: f64 = vals.iter().sum();
            let s2: f64 = vals.iter().map(|x| x * x).sum();
            p.cell_measure(c) * (s2 + s * s) / ((d + 1.0) * (d + 2.0))
        })
        .sum::<f64>()
        .sqrt()
}

pub fn l2_norm_box(mesh: &BoxMesh, w: &BoxField) -> f64 {
    mesh.boxes.iter().zip(&w.values).map(|(b, x)| b.volume * x * x).sum::<f64>().sqrt()
}

/// |||v, q|||_box = ( |v|_H1^2 + ||Pi q||_L2^2 + |q|_{tri,*}^2 )^(1/2).
pub fn box_triple_norm(mesh: &BoxMesh, v: &[NodalField], q: &NodalField) -> f64 {
    let a = h1_seminorm_vec(mesh, v);
    let b = l2_norm_box(mesh, &lump(mesh, q));
    let c = tri_star_seminorm(mesh, q);
    (a * a + b * b + c * c).sqrt()
}

/// Box-weighted mean sum |B_i| q_i / sum |B_i|.
pub fn box_mean(mesh: &BoxMesh, q: &NodalField) -> f64 {
    let num: f64 = mesh.boxes.iter().zip(&q.values).map(|(b, x)| b.volume * x).sum();
    num / mesh.total_volume()
}
