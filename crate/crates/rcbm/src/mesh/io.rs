//! Versioned plain-text mesh format `RCBM-MESH v1`.
//!
//! ```text
//! RCBM-MESH v1
//! DIM d
//! VERTICES n        idx x y [z] boundary(0|1)
//! CELLS m           idx v0 .. vd
//! BOXES n           idx gx gy [gz] volume
//! FACES k           i j area d_ij w_ij nx ny [nz] diamond
//! PATCHES p         owner area nx ny [nz] cx cy [cz]
//! END
//! ```
//!
//! Reals are written with 17 significant digits, so a write/read cycle is
//! bit-exact. Blank lines and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::dual::{build_dual, BoundaryPatch, BoxFace, BoxMesh, ControlVolume};
use super::geom::{add, scale};
use super::tri::TriMesh;
use crate::{Error, Point, Result};

pub const HEADER: &str = "RCBM-MESH v1";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn coords(p: &Point, dim: usize) -> String {
    p[..dim].iter().map(|&x| real(x)).collect::<Vec<_>>().join(" ")
}

pub fn write_mesh<W: Write>(mesh: &BoxMesh, mut out: W) -> Result<()> {
    let d = mesh.dim;
    let p = &mesh.primal;
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "DIM {d}").unwrap();
    writeln!(s, "VERTICES {}", p.n_vertices()).unwrap();
    for (k, v) in p.vertices.iter().enumerate() {
        writeln!(s, "{k} {} {}", coords(v, d), p.boundary[k] as u8).unwrap();
    }
    writeln!(s, "CELLS {}", p.n_cells()).unwrap();
    for c in 0..p.n_cells() {
        let ids: Vec<String> = p.cell(c).iter().map(|x| x.to_string()).collect();
        writeln!(s, "{c} {}", ids.join(" ")).unwrap();
    }
    writeln!(s, "BOXES {}", mesh.n()).unwrap();
    for (k, b) in mesh.boxes.iter().enumerate() {
        writeln!(s, "{k} {} {}", coords(&b.generator, d), real(b.volume)).unwrap();
    }
    writeln!(s, "FACES {}", mesh.faces.len()).unwrap();
    for f in &mesh.faces {
        writeln!(
            s,
            "{} {} {} {} {} {} {}",
            f.i,
            f.j,
            real(f.area),
            real(f.d),
            real(f.w),
            coords(&f.normal, d),
            real(f.diamond)
        )
        .unwrap();
    }
    writeln!(s, "PATCHES {}", mesh.patches.len()).unwrap();
    for q in &mesh.patches {
        writeln!(s, "{} {} {} {}", q.owner, real(q.area), coords(&q.normal, d), coords(&q.centroid, d)).unwrap();
    }
    writeln!(s, "END").unwrap();
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_mesh_file(mesh: &BoxMesh, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_mesh(mesh, std::io::BufWriter::new(f))
}

pub fn read_mesh_file(path: &std::path::Path) -> Result<BoxMesh> {
    let f = std::fs::File::open(path)?;
    read_mesh(std::io::BufReader::new(f))
}

struct Lines {
    lines: Vec<(usize, String)>,
    pos: usize,
}

impl Lines {
    fn next(&mut self) -> Result<(usize, Vec<String>)> {
        let (n, l) = self.lines.get(self.pos).cloned().ok_or(Error::Parse {
            line: self.lines.last().map(|l| l.0).unwrap_or(0),
            msg: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok((n, l.split_whitespace().map(String::from).collect()))
    }

    fn section(&mut self, name: &str) -> Result<(usize, usize)> {
        let (line, t) = self.next()?;
        if t.len() != 2 || t[0] != name {
            return Err(Error::Parse { line, msg: format!("expected `{name} <count>`") });
        }
        let n = t[1].parse().map_err(|_| Error::Parse { line, msg: "bad count".into() })?;
        Ok((line, n))
    }
}

fn num<T: std::str::FromStr>(tok: &[String], k: usize, line: usize) -> Result<T> {
    tok.get(k)
        .ok_or(Error::Parse { line, msg: format!("missing field {k}") })?
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("cannot parse field {k}: `{}`", tok[k]) })
}

fn point(tok: &[String], start: usize, dim: usize, line: usize) -> Result<Point> {
    let mut p = [0.0; 3];
    for c in 0..dim {
        p[c] = num(tok, start + c, line)?;
    }
    Ok(p)
}

fn expect_len(tok: &[String], n: usize, line: usize) -> Result<()> {
    if tok.len() != n {
        return Err(Error::Parse { line, msg: format!("expected {n} fields, found {}", tok.len()) });
    }
    Ok(())
}

fn expect_index(tok: &[String], k: usize, line: usize) -> Result<()> {
    let idx: usize = num(tok, 0, line)?;
    if idx != k {
        return Err(Error::Parse { line, msg: format!("expected index {k}, found {idx}") });
    }
    Ok(())
}

/// Parse and validate a mesh. 2D files are cross-checked against the dual
/// rebuilt from their primal triangulation; 3D files are validated against
/// every dual invariant.
pub fn read_mesh<R: BufRead>(input: R) -> Result<BoxMesh> {
    let mut lines = Vec::new();
    for (k, l) in input.lines().enumerate() {
        let l = l?;
        let t = l.trim();
        if !t.is_empty() && !t.starts_with('#') {
            lines.push((k + 1, t.to_string()));
        }
    }
    let mut it = Lines { lines, pos: 0 };
    let (line, head) = it.next()?;
    if head.join(" ") != HEADER {
        return Err(Error::Parse { line, msg: format!("missing `{HEADER}` header") });
    }
    let (line, t) = it.next()?;
    if t.len() != 2 || t[0] != "DIM" {
        return Err(Error::Parse { line, msg: "expected `DIM <d>`".into() });
    }
    let dim: usize = num(&t, 1, line)?;
    if dim != 2 && dim != 3 {
        return Err(Error::Parse { line, msg: format!("unsupported dimension {dim}") });
    }

    let (_, nv) = it.section("VERTICES")?;
    let mut vertices = Vec::with_capacity(nv);
    let mut boundary = Vec::with_capacity(nv);
    for k in 0..nv {
        let (line, t) = it.next()?;
        expect_len(&t, dim + 2, line)?;
        expect_index(&t, k, line)?;
        vertices.push(point(&t, 1, dim, line)?);
        let flag: u8 = num(&t, dim + 1, line)?;
        boundary.push(flag != 0);
    }
    let (_, nc) = it.section("CELLS")?;
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    for k in 0..nc {
        let (line, t) = it.next()?;
        expect_len(&t, dim + 2, line)?;
        expect_index(&t, k, line)?;
        for c in 0..=dim {
            cells.push(num(&t, 1 + c, line)?);
        }
    }
    let primal = TriMesh::new(dim, vertices, cells, boundary)?;

    let (_, nb) = it.section("BOXES")?;
    let mut boxes = Vec::with_capacity(nb);
    for k in 0..nb {
        let (line, t) = it.next()?;
        expect_len(&t, dim + 2, line)?;
        expect_index(&t, k, line)?;
        boxes.push(ControlVolume {
            generator: point(&t, 1, dim, line)?,
            volume: num(&t, dim + 1, line)?,
            centroid: None,
            faces: Vec::new(),
            patches: Vec::new(),
            on_boundary: primal.boundary.get(k).copied().unwrap_or(false),
        });
    }
    if nb != primal.n_vertices() {
        return Err(Error::InvalidMesh(format!("{nb} boxes for {} vertices", primal.n_vertices())));
    }

    let mut edge_h: HashMap<(usize, usize), f64> = HashMap::new();
    for c in 0..primal.n_cells() {
        let cell = primal.cell(c);
        let h = primal.cell_diameter(c);
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                let key = (cell[a].min(cell[b]), cell[a].max(cell[b]));
                let e = edge_h.entry(key).or_insert(0.0);
                *e = e.max(h);
            }
        }
    }

    let (_, nf) = it.section("FACES")?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, t) = it.next()?;
        expect_len(&t, 6 + dim, line)?;
        let i: usize = num(&t, 0, line)?;
        let j: usize = num(&t, 1, line)?;
        if i >= nb || j >= nb {
            return Err(Error::Parse { line, msg: "face references missing box".into() });
        }
        let d: f64 = num(&t, 3, line)?;
        let w: f64 = num(&t, 4, line)?;
        let normal = point(&t, 5, dim, line)?;
        let h_tri = *edge_h.get(&(i.min(j), i.max(j))).ok_or(Error::Parse {
            line,
            msg: format!("face ({i},{j}) does not correspond to a primal edge"),
        })?;
        let cross_point = add(&boxes[i].generator, &scale(&normal, (1.0 - w) * d));
        faces.push(BoxFace {
            i,
            j,
            area: num(&t, 2, line)?,
            d,
            normal,
            w,
            diamond: num(&t, 5 + dim, line)?,
            centroid: cross_point,
            cross_point,
            h_tri,
            ends: None,
        });
    }
    let (_, np) = it.section("PATCHES")?;
    let mut patches = Vec::with_capacity(np);
    for _ in 0..np {
        let (line, t) = it.next()?;
        expect_len(&t, 2 + 2 * dim, line)?;
        let owner: usize = num(&t, 0, line)?;
        if owner >= nb {
            return Err(Error::Parse { line, msg: "patch references missing box".into() });
        }
        patches.push(BoundaryPatch {
            owner,
            area: num(&t, 1, line)?,
            normal: point(&t, 2, dim, line)?,
            centroid: point(&t, 2 + dim, dim, line)?,
        });
    }
    let (line, t) = it.next()?;
    if t.len() != 1 || t[0] != "END" {
        return Err(Error::Parse { line, msg: "expected END".into() });
    }

    for (f, face) in faces.iter().enumerate() {
        boxes[face.i].faces.push(f);
        boxes[face.j].faces.push(f);
    }
    for (p, patch) in patches.iter().enumerate() {
        boxes[patch.owner].patches.push(p);
    }
    let mesh = BoxMesh { dim, primal, boxes, faces, patches };
    mesh.validate(1e-10)?;
    if dim == 3 {
        let v = mesh.primal.delaunay_violations();
        if v > 0 {
            return Err(Error::Delaunay(format!("imported mesh has {v} empty-sphere violations")));
        }
        return Ok(mesh);
    }
    let rebuilt = build_dual(&mesh.primal)?;
    cross_check(&mesh, &rebuilt)?;
    Ok(rebuilt)
}

fn cross_check(file: &BoxMesh, rebuilt: &BoxMesh) -> Result<()> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300);
    if file.faces.len() != rebuilt.faces.len() || file.patches.len() != rebuilt.patches.len() {
        return Err(Error::InvalidMesh("face or patch count differs from the rebuilt dual".into()));
    }
    let index: HashMap<(usize, usize), usize> =
        rebuilt.faces.iter().enumerate().map(|(k, f)| ((f.i.min(f.j), f.i.max(f.j)), k)).collect();
    for f in &file.faces {
        let r = &rebuilt.faces[*index
            .get(&(f.i.min(f.j), f.i.max(f.j)))
            .ok_or_else(|| Error::InvalidMesh(format!("face ({},{}) absent from rebuilt dual", f.i, f.j)))?];
        let sign = if r.i == f.i { 1.0 } else { -1.0 };
        let w = if r.i == f.i { r.w } else { 1.0 - r.w };
        let ok = close(f.area, r.area)
            && close(f.d, r.d)
            && (f.w - w).abs() <= 1e-10
            && (0..2).all(|c| (f.normal[c] - sign * r.normal[c]).abs() <= 1e-10);
        if !ok {
            return Err(Error::InvalidMesh(format!("face ({},{}) disagrees with the rebuilt dual", f.i, f.j)));
        }
    }
    for (k, (a, b)) in file.boxes.iter().zip(&rebuilt.boxes).enumerate() {
        if !close(a.volume, b.volume) {
            return Err(Error::InvalidMesh(format!("box {k} volume disagrees with the rebuilt dual")));
        }
    }
    Ok(())
}
