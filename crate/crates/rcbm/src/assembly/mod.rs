//! Sparse operators of the Box Method.
//!
//! Unknowns are nodal: pressure DOF `k` is vertex `k`, velocity DOF
//! `(l, k)` is `l * N + k` (component-major). Every vertex owns a control
//! volume, so all operators are square over vertices before the Dirichlet
//! velocity DOFs are eliminated.

pub mod sparse;

use crate::fields::{BoxField, NodalField};
use std::collections::BTreeMap;

use crate::mesh::geom::{barycentric_gradients, circumcenter, dot, orient2d, sub};
use crate::mesh::BoxMesh;
use crate::quadrature::SimplexRule;
use crate::{Error, Point, Result};
pub use sparse::SparseMatrix;

/// Velocity DOF index of component `l` at vertex `k`.
pub fn vdof(n: usize, l: usize, k: usize) -> usize {
    l * n + k
}

fn check_faces(mesh: &BoxMesh) -> Result<()> {
    let n = mesh.n();
    for (k, f) in mesh.faces.iter().enumerate() {
        if f.i >= n || f.j >= n {
            return Err(Error::Assembly(format!("face {k} references a missing box")));
        }
        if !(f.d > 0.0) {
            return Err(Error::Assembly(format!("face {k} has nonpositive generator distance")));
        }
    }
    Ok(())
}

/// Scalar face-difference operator with weights |F|/d (the *-norm matrix Q).
pub fn assemble_q(mesh: &BoxMesh) -> Result<SparseMatrix> {
    check_faces(mesh)?;
    let n = mesh.n();
    let mut t = Vec::with_capacity(4 * mesh.faces.len() + n);
    for k in 0..n {
        t.push((k, k, 0.0));
    }
    for f in &mesh.faces {
        let c = f.area / f.d;
        t.push((f.i, f.i, c));
        t.push((f.j, f.j, c));
        t.push((f.i, f.j, -c));
        t.push((f.j, f.i, -c));
    }
    Ok(SparseMatrix::from_triplets(n, n, t))
}

/// Momentum operator: d copies of nu * Q on the diagonal blocks.
pub fn assemble_a(mesh: &BoxMesh, nu: f64) -> Result<SparseMatrix> {
    if !(nu > 0.0) {
        return Err(Error::Assembly(format!("viscosity must be positive, got {nu}")));
    }
    let q = assemble_q(mesh)?;
    let n = mesh.n();
    let d = mesh.dim;
    let mut t = Vec::with_capacity(d * q.nnz());
    for l in 0..d {
        t.extend(q.triplets().into_iter().map(|(r, c, v)| (l * n + r, l * n + c, nu * v)));
    }
    Ok(SparseMatrix::from_triplets(d * n, d * n, t))
}

/// Flux stencil of every face: the normal flux from box i to box j of a
/// nodal field u is sum_v c_v u_v . n.
///
/// Faces between two interior boxes use the face-interpolated value
/// |F| (w u_i + (1 - w) u_j). Faces touching a boundary cell integrate the
/// P1 field exactly, piece by piece over the primal cells sharing the edge:
/// there the prescribed velocity leaves no freedom to absorb the O(h^2)
/// flux defect of the interpolated value. Imported 3D meshes use the
/// interpolated value throughout.
pub fn face_stencils(mesh: &BoxMesh) -> Result<Vec<Vec<(usize, f64)>>> {
    check_faces(mesh)?;
    let p = &mesh.primal;
    let mut edge_cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    if mesh.dim == 2 {
        for c in 0..p.n_cells() {
            let cell = p.cell(c);
            for k in 0..3 {
                let (a, b) = (cell[k], cell[(k + 1) % 3]);
                edge_cells.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }
    }
    let mut out = Vec::with_capacity(mesh.faces.len());
    for f in &mesh.faces {
        let touches = mesh.boxes[f.i].on_boundary || mesh.boxes[f.j].on_boundary;
        if mesh.dim != 2 || !touches {
            out.push(vec![(f.i, f.area * f.w), (f.j, f.area * (1.0 - f.w))]);
            continue;
        }
        let cells = edge_cells.get(&(f.i.min(f.j), f.i.max(f.j))).cloned().unwrap_or_default();
        let m = f.cross_point;
        let edge = sub(&p.vertices[f.j], &p.vertices[f.i]);
        let mut stencil = Vec::with_capacity(6);
        let mut total = 0.0;
        for c in cells {
            let pts = p.cell_points(c);
            let cc = circumcenter(2, &pts)?;
            let third = *p.cell(c).iter().find(|&&v| v != f.i && v != f.j).expect("edge cell has a third vertex");
            let mut t = [-edge[1], edge[0], 0.0];
            let len = dot(&t, &t).sqrt();
            t = [t[0] / len, t[1] / len, 0.0];
            if dot(&sub(&p.vertices[third], &m), &t) < 0.0 {
                t = [-t[0], -t[1], 0.0];
            }
            let piece = dot(&sub(&cc, &m), &t);
            total += piece;
            let mid = [m[0] + 0.5 * piece * t[0], m[1] + 0.5 * piece * t[1], 0.0];
            let grads = barycentric_gradients(2, &pts)?;
            for (k, &v) in p.cell(c).iter().enumerate() {
                let lam = if k == 0 { 1.0 } else { 0.0 } + dot(&grads[k], &sub(&mid, &pts[0]));
                stencil.push((v, piece * lam));
            }
        }
        if (total - f.area).abs() > 1e-9 * f.area.max(f.d) {
            return Err(Error::Assembly(format!("face ({}, {}) pieces do not add up to its length", f.i, f.j)));
        }
        out.push(stencil);
    }
    Ok(out)
}

/// Discrete divergence: row k holds the outward flux sum over the dual
/// faces of control volume k. The flux through domain-boundary patches is
/// Dirichlet data and enters the right-hand side instead.
pub fn assemble_b(mesh: &BoxMesh) -> Result<SparseMatrix> {
    let stencils = face_stencils(mesh)?;
    let n = mesh.n();
    let d = mesh.dim;
    let mut t = Vec::new();
    for (f, st) in mesh.faces.iter().zip(&stencils) {
        for &(v, c) in st {
            for l in 0..d {
                t.push((f.i, vdof(n, l, v), c * f.normal[l]));
                t.push((f.j, vdof(n, l, v), -c * f.normal[l]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, d * n, t))
}

/// Discrete pressure gradient Bt = -B^T. On a box whose faces all use the
/// interpolated value, row (l, i) is the Gauss-Green sum
/// sum_F |F| (w q_i + (1 - w) q_j) n_l closed by q_i on boundary patches.
pub fn assemble_bt(mesh: &BoxMesh) -> Result<SparseMatrix> {
    Ok(assemble_b(mesh)?.transpose().scaled(-1.0))
}

/// Diagonal of the first component block of `a` (all blocks are equal).
pub fn diag_d(a: &SparseMatrix, n: usize) -> BoxField {
    BoxField { values: (0..n).map(|k| a.get(k, k)).collect() }
}

/// Symmetric positive semidefinite face Laplacian with box diffusivity:
/// face coefficient |F| (w |B_i| k_i + (1 - w) |B_j| k_j) / d.
pub fn assemble_r(mesh: &BoxMesh, kappa: &BoxField) -> Result<SparseMatrix> {
    check_faces(mesh)?;
    let n = mesh.n();
    let mut t = Vec::with_capacity(4 * mesh.faces.len() + n);
    for k in 0..n {
        t.push((k, k, 0.0));
    }
    for f in &mesh.faces {
        let (bi, bj) = (mesh.boxes[f.i].volume, mesh.boxes[f.j].volume);
        let c = f.area * (f.w * bi * kappa.values[f.i] + (1.0 - f.w) * bj * kappa.values[f.j]) / f.d;
        t.push((f.i, f.i, c));
        t.push((f.j, f.j, c));
        t.push((f.i, f.j, -c));
        t.push((f.j, f.i, -c));
    }
    Ok(SparseMatrix::from_triplets(n, n, t))
}

/// Rhie-Chow matrix C = B D^-1 Bt + R(D^-1).
///
/// The first term is the divergence of the face-interpolated Gauss-Green
/// gradients scaled by D^-1 (wide stencil, negative semidefinite), the second
/// the compact Laplacian with the same diffusivity. Gradients enter the wide
/// term only on interior boxes: boundary velocities are prescribed, and the
/// truncated corner boxes would otherwise make C indefinite. C is symmetric
/// positive semidefinite and annihilates constants.
pub fn assemble_c(mesh: &BoxMesh, b: &SparseMatrix, bt: &SparseMatrix, d: &BoxField) -> Result<SparseMatrix> {
    let n = mesh.n();
    if let Some(k) = d.values.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Assembly(format!("diagonal D is not positive at box {k}")));
    }
    let inv: Vec<f64> = (0..bt.nrows)
        .map(|r| if mesh.boxes[r % n].on_boundary { 0.0 } else { 1.0 / d.values[r % n] })
        .collect();
    let wide = b.matmul(&bt.scale_rows(&inv));
    let kappa = BoxField { values: d.values.iter().map(|x| 1.0 / x).collect() };
    let r = assemble_r(mesh, &kappa)?;
    Ok(wide.add_scaled(&r, 1.0))
}

/// Gauss-Green gradient per control volume.
pub fn gauss_green_gradient(mesh: &BoxMesh, q: &NodalField) -> Vec<Point> {
    let mut g = vec![[0.0; 3]; mesh.n()];
    for f in &mesh.faces {
        let qf = f.w * q.values[f.i] + (1.0 - f.w) * q.values[f.j];
        for l in 0..3 {
            g[f.i][l] += f.area * qf * f.normal[l];
            g[f.j][l] -= f.area * qf * f.normal[l];
        }
    }
    for p in &mesh.patches {
        for l in 0..3 {
            g[p.owner][l] += p.area * q.values[p.owner] * p.normal[l];
        }
    }
    for (k, gk) in g.iter_mut().enumerate() {
        let v = mesh.boxes[k].volume;
        gk.iter_mut().for_each(|x| *x /= v);
    }
    g
}

/// Integral of `f` over every control volume: 2D boxes are split into
/// generator fans integrated with a degree-`degree` rule; imported 3D boxes
/// use the one-point rule at the generator.
pub fn box_integrals(mesh: &BoxMesh, f: &dyn Fn(&Point) -> Point, degree: usize) -> Vec<Point> {
    let rule = SimplexRule::new(2, degree);
    (0..mesh.n())
        .map(|k| match mesh.fan(k) {
            Some(fan) => {
                let mut s = [0.0; 3];
                for tri in &fan {
                    let area = 0.5 * orient2d(&tri[0], &tri[1], &tri[2]);
                    for (x, w) in rule.map(tri) {
                        let v = f(&x);
                        for l in 0..3 {
                            s[l] += area * w * v[l];
                        }
                    }
                }
                s
            }
            None => {
                let v = f(&mesh.boxes[k].generator);
                let vol = mesh.boxes[k].volume;
                [vol * v[0], vol * v[1], vol * v[2]]
            }
        })
        .collect()
}

/// Momentum right-hand side: entry (l, i) = integral of f_l over box i.
pub fn assemble_rhs(mesh: &BoxMesh, f: &dyn Fn(&Point) -> Point) -> Vec<f64> {
    let n = mesh.n();
    let ints = box_integrals(mesh, f, 4);
    let mut out = vec![0.0; mesh.dim * n];
    for (k, v) in ints.iter().enumerate() {
        for l in 0..mesh.dim {
            out[vdof(n, l, k)] = v[l];
        }
    }
    out
}

/// The stabilized saddle-point system [[A, Bt], [B, C]] [u; p] = [F; H].
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub dim: usize,
    pub n: usize,
    pub nu: f64,
    pub a: SparseMatrix,
    pub bt: SparseMatrix,
    pub b: SparseMatrix,
    pub c: SparseMatrix,
    /// Momentum right-hand side.
    pub f: Vec<f64>,
    /// Continuity right-hand side.
    pub h: Vec<f64>,
    /// Diagonal of A before elimination (per vertex).
    pub d: BoxField,
    /// Velocity DOFs fixed by Dirichlet data.
    pub dirichlet: Vec<bool>,
    pub volumes: Vec<f64>,
}

impl SaddleSystem {
    pub fn n_u(&self) -> usize {
        self.dim * self.n
    }

    /// Full block matrix [[A, Bt], [B, C]].
    pub fn block_matrix(&self) -> SparseMatrix {
        let nu_ = self.n_u();
        let mut t = self.a.triplets();
        t.extend(self.bt.triplets().into_iter().map(|(r, c, v)| (r, nu_ + c, v)));
        t.extend(self.b.triplets().into_iter().map(|(r, c, v)| (nu_ + r, c, v)));
        t.extend(self.c.triplets().into_iter().map(|(r, c, v)| (nu_ + r, nu_ + c, v)));
        SparseMatrix::from_triplets(nu_ + self.n, nu_ + self.n, t)
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = self.f.clone();
        r.extend_from_slice(&self.h);
        r
    }

    /// Relative residual of [u; p] against the block system.
    pub fn residual(&self, u: &[f64], p: &[f64]) -> f64 {
        let au = self.a.mul_vec(u);
        let btp = self.bt.mul_vec(p);
        let bu = self.b.mul_vec(u);
        let cp = self.c.mul_vec(p);
        let mut num = 0.0;
        for k in 0..au.len() {
            num += (self.f[k] - au[k] - btp[k]).powi(2);
        }
        for k in 0..bu.len() {
            num += (self.h[k] - bu[k] - cp[k]).powi(2);
        }
        let den: f64 = self.f.iter().chain(&self.h).map(|x| x * x).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// Assemble all blocks and the momentum right-hand side (no boundary data).
pub fn assemble_system(mesh: &BoxMesh, nu: f64, f: &dyn Fn(&Point) -> Point) -> Result<SaddleSystem> {
    let n = mesh.n();
    let a = assemble_a(mesh, nu)?;
    let bt = assemble_bt(mesh)?;
    let b = assemble_b(mesh)?;
    let d = diag_d(&a, n);
    let c = assemble_c(mesh, &b, &bt, &d)?;
    Ok(SaddleSystem {
        dim: mesh.dim,
        n,
        nu,
        a,
        bt,
        b,
        c,
        f: assemble_rhs(mesh, f),
        h: vec![0.0; n],
        d,
        dirichlet: vec![false; mesh.dim * n],
        volumes: mesh.volumes(),
    })
}

/// Eliminate the boundary velocity DOFs with data g_h = nodal interpolant of
/// `g`: the columns move to the right-hand side, the rows become identity
/// rows. The normal flux of `g` through the domain-boundary patches enters
/// the continuity right-hand side, which is then made compatible (zero sum)
/// by spreading the quadrature defect over the patches by area.
pub fn apply_dirichlet(sys: &SaddleSystem, mesh: &BoxMesh, g: &dyn Fn(&Point) -> Point) -> SaddleSystem {
    let n = sys.n;
    let d = sys.dim;
    let mut fixed = vec![None; d * n];
    for k in 0..n {
        if mesh.boxes[k].on_boundary {
            let v = g(&mesh.boxes[k].generator);
            for l in 0..d {
                fixed[vdof(n, l, k)] = Some(v[l]);
            }
        }
    }
    let gv: Vec<f64> = fixed.iter().map(|x| x.unwrap_or(0.0)).collect();
    let ag = sys.a.mul_vec(&gv);
    let bg = sys.b.mul_vec(&gv);
    let mut f = sys.f.clone();
    let mut h = sys.h.clone();
    for r in 0..d * n {
        match fixed[r] {
            Some(v) => f[r] = v,
            None => f[r] -= ag[r],
        }
    }
    for k in 0..n {
        h[k] -= bg[k];
    }
    let mut flux_total = 0.0;
    let mut area_total = 0.0;
    for p in &mesh.patches {
        let flux = p.area * dot(&p.normal, &g(&p.centroid));
        h[p.owner] -= flux;
        flux_total += flux;
        area_total += p.area;
    }
    if area_total > 0.0 {
        for p in &mesh.patches {
            h[p.owner] += flux_total * p.area / area_total;
        }
    }
    let keep = |r: usize| fixed[r].is_none();
    let a = SparseMatrix::from_triplets(
        d * n,
        d * n,
        sys.a
            .triplets()
            .into_iter()
            .filter(|&(r, c, _)| keep(r) && keep(c))
            .chain((0..d * n).filter(|&r| !keep(r)).map(|r| (r, r, 1.0)))
            .collect(),
    );
    let bt = SparseMatrix::from_triplets(d * n, n, sys.bt.triplets().into_iter().filter(|&(r, _, _)| keep(r)).collect());
    let b = SparseMatrix::from_triplets(n, d * n, sys.b.triplets().into_iter().filter(|&(_, c, _)| keep(c)).collect());
    SaddleSystem {
        a,
        bt,
        b,
        f,
        h,
        dirichlet: fixed.iter().map(|x| x.is_some()).collect(),
        ..sys.clone()
    }
}
