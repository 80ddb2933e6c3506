//! Quadrature on intervals and simplices.
//!
//! Simplex rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules, which gives a rule of any requested polynomial degree in 2D and 3D.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // Initial guess from the Chebyshev-like asymptotic formula.
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature rule on the reference simplex: barycentric coordinates and
/// weights summing to one, so that the integral over a simplex T is
/// `|T| * sum(w * f(x(bary)))`.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub dim: usize,
    pub points: Vec<([f64; 4], f64)>,
}

impl SimplexRule {
    /// Rule exact for polynomials of total degree `degree` on a `dim`-simplex.
    pub fn new(dim: usize, degree: usize) -> Self {
        let n = (degree + dim + 1) / 2;
        let gl = gauss_legendre(n.max(1));
        let mut points = Vec::new();
        match dim {
            1 => {
                for &(s, ws) in &gl {
                    points.push(([1.0 - s, s, 0.0, 0.0], ws));
                }
            }
            2 => {
                for &(s, ws) in &gl {
                    for &(t, wt) in &gl {
                        let x = s;
                        let y = t * (1.0 - s);
                        let w = ws * wt * (1.0 - s) * 2.0;
                        points.push(([1.0 - x - y, x, y, 0.0], w));
                    }
                }
            }
            3 => {
                for &(s, ws) in &gl {
                    for &(t, wt) in &gl {
                        for &(r, wr) in &gl {
                            let x = s;
                            let y = t * (1.0 - s);
                            let z = r * (1.0 - s) * (1.0 - t);
                            let w = ws * wt * wr * (1.0 - s) * (1.0 - s) * (1.0 - t) * 6.0;
                            points.push(([1.0 - x - y - z, x, y, z], w));
                        }
                    }
                }
            }
            _ => panic!("unsupported simplex dimension {dim}"),
        }
        SimplexRule { dim, points }
    }

    /// Physical quadrature points of the simplex with vertices `verts`.
    pub fn map<'a>(
        &'a self,
        verts: &'a [crate::Point],
    ) -> impl Iterator<Item = (crate::Point, f64)> + 'a {
        self.points.iter().map(move |(b, w)| {
            let mut x = [0.0; 3];
            for (k, v) in verts.iter().enumerate() {
                for c in 0..3 {
                    x[c] += b[k] * v[c];
                }
            }
            (x, *w)
        })
    }
}
