//! Independent dense oracles shared by the unit tests.

use crate::mesh::geom::barycentric_gradients;
use crate::mesh::{build_dual, triangulate_square, BoxMesh, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mesh(h: f64, jitter: f64, seed: u64) -> BoxMesh {
    build_dual(&triangulate_square(Rect::square(-0.25, 0.25), h, jitter, seed).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Cyclic Jacobi eigenvalues of a dense symmetric matrix, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Dense P1 stiffness matrix assembled element by element on the primal mesh.
pub fn p1_stiffness(mesh: &BoxMesh) -> Vec<Vec<f64>> {
    let p = &mesh.primal;
    let n = p.n_vertices();
    let mut k = vec![vec![0.0; n]; n];
    for c in 0..p.n_cells() {
        let g = barycentric_gradients(p.dim, &p.cell_points(c)).unwrap();
        let area = p.cell_measure(c);
        let cell = p.cell(c);
        for a in 0..cell.len() {
            for b in 0..cell.len() {
                k[cell[a]][cell[b]] += area * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
            }
        }
    }
    k
}
