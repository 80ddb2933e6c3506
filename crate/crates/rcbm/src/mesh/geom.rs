//! Small fixed-size geometry helpers.

use crate::{Error, Point, Result};

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn midpoint(a: &Point, b: &Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

/// z-component of the 2D cross product (b - a) x (c - a).
pub fn orient2d(a: &Point, b: &Point, c: &Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Signed measure of a simplex given by `dim + 1` points.
pub fn signed_measure(dim: usize, pts: &[Point]) -> f64 {
    match dim {
        2 => 0.5 * orient2d(&pts[0], &pts[1], &pts[2]),
        3 => {
            let a = sub(&pts[1], &pts[0]);
            let b = sub(&pts[2], &pts[0]);
            let c = sub(&pts[3], &pts[0]);
            dot(&a, &cross(&b, &c)) / 6.0
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Largest vertex-to-vertex distance of a simplex.
pub fn diameter(pts: &[Point]) -> f64 {
    let mut h: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            h = h.max(dist(&pts[a], &pts[b]));
        }
    }
    h
}

/// Solve a 2x2 or 3x3 linear system by Cramer's rule.
pub fn solve_small(dim: usize, m: &[[f64; 3]; 3], rhs: &[f64; 3]) -> Option<[f64; 3]> {
    match dim {
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det == 0.0 {
                return None;
            }
            Some([
                (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
                (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
                0.0,
            ])
        }
        3 => {
            let det = det3(m);
            if det == 0.0 {
                return None;
            }
            let mut out = [0.0; 3];
            for k in 0..3 {
                let mut mk = *m;
                for r in 0..3 {
                    mk[r][k] = rhs[r];
                }
                out[k] = det3(&mk) / det;
            }
            Some(out)
        }
        _ => None,
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Circumcenter of a nondegenerate simplex with `dim + 1` vertices.
///
/// Solves 2 (x_k - x_0) . c = |x_k|^2 - |x_0|^2 in coordinates relative to x_0.
pub fn circumcenter(dim: usize, pts: &[Point]) -> Result<Point> {
    if pts.len() != dim + 1 {
        return Err(Error::DegenerateSimplex(format!(
            "expected {} vertices, got {}",
            dim + 1,
            pts.len()
        )));
    }
    let h = diameter(pts);
    let vol = signed_measure(dim, pts).abs();
    if !(h > 0.0) || vol <= 1e-12 * h.powi(dim as i32) {
        return Err(Error::DegenerateSimplex(format!(
            "measure {vol:e} relative to diameter {h:e}"
        )));
    }
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for k in 0..dim {
        let e = sub(&pts[k + 1], &pts[0]);
        for c in 0..dim {
            m[k][c] = 2.0 * e[c];
        }
        rhs[k] = dot(&e, &e);
    }
    let rel = solve_small(dim, &m, &rhs)
        .ok_or_else(|| Error::DegenerateSimplex("singular circumcenter system".into()))?;
    Ok(add(&pts[0], &rel))
}

/// Gradients of the barycentric coordinates of a simplex (P1 basis gradients).
pub fn barycentric_gradients(dim: usize, pts: &[Point]) -> Result<Vec<Point>> {
    // Rows of J^{-T} where J = [x_1 - x_0, ..., x_d - x_0] (columns).
    let mut jt = [[0.0; 3]; 3];
    for k in 0..dim {
        let e = sub(&pts[k + 1], &pts[0]);
        for c in 0..dim {
            jt[k][c] = e[c];
        }
    }
    let mut grads = vec![[0.0; 3]; dim + 1];
    for k in 0..dim {
        let mut rhs = [0.0; 3];
        rhs[k] = 1.0;
        let g = solve_small(dim, &jt, &rhs)
            .ok_or_else(|| Error::DegenerateSimplex("singular simplex Jacobian".into()))?;
        grads[k + 1] = g;
    }
    let mut g0 = [0.0; 3];
    for k in 1..=dim {
        g0 = sub(&g0, &grads[k]);
    }
    grads[0] = g0;
    Ok(grads)
}
