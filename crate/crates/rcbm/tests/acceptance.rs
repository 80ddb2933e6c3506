//! Acceptance suite. Prints one line per criterion and exits nonzero if
//! any criterion fails. 3D criteria run only when RCBM_MESH3D_DIR points
//! at a directory of imported `.mesh` files.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcbm::assembly::{apply_dirichlet, assemble_a, assemble_b, assemble_bt, assemble_system, diag_d, vdof, SparseMatrix};
use rcbm::fields::{box_triple_norm, h1_seminorm, h1_seminorm_vec, l2_norm, star_seminorm, NodalField};
use rcbm::harness::{case_2d, discretize, fit_rate, mesh_files, run_convergence, run_convergence_on, StudyConfig};
use rcbm::mesh::io::read_mesh_file;
use rcbm::mesh::{build_dual, triangulate_square, BoxMesh, Rect};
use rcbm::solver::{simple_iterate, solve_monolithic_tol, SimpleConfig};
use rcbm::spectral::{
    coercivity_study, family_2d, fitted_slope, infsup_study, mass_matrix, max_generalized_eig, min_generalized_eig,
    star_norm_matrix, EigStudyRow,
};
use rcbm::Point;

type Outcome = Result<String, String>;

fn square_mesh(lo: f64, hi: f64, h: f64, jitter: f64, seed: u64) -> BoxMesh {
    build_dual(&triangulate_square(Rect::square(lo, hi), h, jitter, seed).unwrap()).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn tri(mesh: &BoxMesh, c: usize) -> ([usize; 3], [[f64; 2]; 3]) {
    let v = mesh.primal.cell(c);
    let p = |k: usize| {
        let x = mesh.primal.vertices[v[k]];
        [x[0], x[1]]
    };
    ([v[0], v[1], v[2]], [p(0), p(1), p(2)])
}

/// Signed area and gradients of the three hat functions of a triangle.
fn hats(p: &[[f64; 2]; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        // gradient of lambda_k is the rotated opposite edge over 2 |T|
        g[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    (0.5 * det, g)
}

fn hat_value(p: &[[f64; 2]; 3], g: &[[f64; 2]; 3], k: usize, x: [f64; 2]) -> f64 {
    let base = if k == 0 { 1.0 } else { 0.0 };
    base + g[k][0] * (x[0] - p[0][0]) + g[k][1] * (x[1] - p[0][1])
}

fn circumcentre(p: &[[f64; 2]; 3]) -> [f64; 2] {
    let (ax, ay) = (p[0][0], p[0][1]);
    let (bx, by) = (p[1][0] - ax, p[1][1] - ay);
    let (cx, cy) = (p[2][0] - ax, p[2][1] - ay);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [ax + (cy * b2 - by * c2) / d, ay + (bx * c2 - cx * b2) / d]
}

fn p1_stiffness(mesh: &BoxMesh) -> Vec<Vec<(usize, f64)>> {
    let mut rows = vec![Vec::new(); mesh.n()];
    for c in 0..mesh.primal.n_cells() {
        let (v, p) = tri(mesh, c);
        let (area, g) = hats(&p);
        for a in 0..3 {
            for b in 0..3 {
                rows[v[a]].push((v[b], area.abs() * (g[a][0] * g[b][0] + g[a][1] * g[b][1])));
            }
        }
    }
    rows
}

fn to_matrix(mesh: &BoxMesh, rows: &[Vec<(usize, f64)>]) -> SparseMatrix {
    let t = rows.iter().enumerate().flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v))).collect();
    SparseMatrix::from_triplets(mesh.n(), mesh.n(), t)
}

fn p1_mass(mesh: &BoxMesh) -> SparseMatrix {
    let mut t = Vec::new();
    for c in 0..mesh.primal.n_cells() {
        let (v, p) = tri(mesh, c);
        let area = hats(&p).0.abs();
        for a in 0..3 {
            for b in 0..3 {
                t.push((v[a], v[b], area / if a == b { 6.0 } else { 12.0 }));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n(), mesh.n(), t)
}

fn edge_cells(mesh: &BoxMesh) -> std::collections::HashMap<(usize, usize), Vec<usize>> {
    let mut out: std::collections::HashMap<(usize, usize), Vec<usize>> = Default::default();
    for c in 0..mesh.primal.n_cells() {
        let v = mesh.primal.cell(c);
        for k in 0..3 {
            let (a, b) = (v[k], v[(k + 1) % 3]);
            out.entry((a.min(b), a.max(b))).or_default().push(c);
        }
    }
    out
}

/// c(v, Pi q): outward normal fluxes of v summed per box and tested with q.
/// Faces between two interior boxes take |F| (w v_i + (1 - w) v_j) . n;
/// faces touching a boundary cell integrate each triangle's linear field
/// over its half of the face (two-point Gauss), from the edge midpoint to
/// the circumcentre, signed by the side of the triangle's third vertex.
fn continuity_form(mesh: &BoxMesh, v: &[Vec<f64>; 2], q: &[f64]) -> f64 {
    let cells = edge_cells(mesh);
    let mut total = 0.0;
    for f in &mesh.faces {
        let n = [f.normal[0], f.normal[1]];
        let flux = if !mesh.boxes[f.i].on_boundary && !mesh.boxes[f.j].on_boundary {
            (0..2).map(|l| f.area * (f.w * v[l][f.i] + (1.0 - f.w) * v[l][f.j]) * n[l]).sum::<f64>()
        } else {
            let (xi, xj) = (mesh.primal.vertices[f.i], mesh.primal.vertices[f.j]);
            let m = [0.5 * (xi[0] + xj[0]), 0.5 * (xi[1] + xj[1])];
            let mut s = 0.0;
            for &c in &cells[&(f.i.min(f.j), f.i.max(f.j))] {
                let (vs, p) = tri(mesh, c);
                let (_, g) = hats(&p);
                let cc = circumcentre(&p);
                let third = p[(0..3).find(|&k| vs[k] != f.i && vs[k] != f.j).unwrap()];
                // tangent along the face, towards the third vertex
                let mut t = [-(xj[1] - xi[1]), xj[0] - xi[0]];
                let len = t[0].hypot(t[1]);
                t = [t[0] / len, t[1] / len];
                if (third[0] - m[0]) * t[0] + (third[1] - m[1]) * t[1] < 0.0 {
                    t = [-t[0], -t[1]];
                }
                let piece = (cc[0] - m[0]) * t[0] + (cc[1] - m[1]) * t[1];
                let g3 = 0.5 / 3f64.sqrt();
                for s_ in [0.5 - g3, 0.5 + g3] {
                    let x = [m[0] + s_ * piece * t[0], m[1] + s_ * piece * t[1]];
                    for (k, &vk) in vs.iter().enumerate() {
                        let lam = hat_value(&p, &g, k, x);
                        s += 0.5 * piece * lam * (v[0][vk] * n[0] + v[1][vk] * n[1]);
                    }
                }
            }
            s
        };
        total += flux * (q[f.i] - q[f.j]);
    }
    total
}

/// Exact integral of grad p_h over every interior box: each triangle at
/// vertex i contributes grad p_T times the signed area of the quadrilateral
/// (x_i, m_ij, c_T, m_ik).
fn exact_box_gradients(mesh: &BoxMesh, p: &[f64]) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; mesh.n()];
    let mut vol = vec![0.0; mesh.n()];
    for c in 0..mesh.primal.n_cells() {
        let (v, pts) = tri(mesh, c);
        let (area, g) = hats(&pts);
        let sign = area.signum();
        let grad = [
            (0..3).map(|k| g[k][0] * p[v[k]]).sum::<f64>(),
            (0..3).map(|k| g[k][1] * p[v[k]]).sum::<f64>(),
        ];
        let cc = circumcentre(&pts);
        for k in 0..3 {
            let (x, a, b) = (pts[k], pts[(k + 1) % 3], pts[(k + 2) % 3]);
            let mab = [0.5 * (x[0] + a[0]), 0.5 * (x[1] + a[1])];
            let mac = [0.5 * (x[0] + b[0]), 0.5 * (x[1] + b[1])];
            let quad = [x, mab, cc, mac];
            let s: f64 = (0..4).map(|r| quad[r][0] * quad[(r + 1) % 4][1] - quad[(r + 1) % 4][0] * quad[r][1]).sum();
            let share = 0.5 * s * sign;
            vol[v[k]] += share;
            out[v[k]][0] += share * grad[0];
            out[v[k]][1] += share * grad[1];
        }
    }
    for k in mesh.interior_boxes() {
        assert!((vol[k] - mesh.boxes[k].volume).abs() < 1e-12 * mesh.boxes[k].volume.max(1e-300), "box {k} shares");
    }
    out
}

fn row_line(rows: &[EigStudyRow]) -> String {
    rows.iter().map(|r| format!("{:.4}:{:.3e}", r.h, r.value)).collect::<Vec<_>>().join(" ")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn convergence() -> Outcome {
    let cfg = StudyConfig { levels: vec![0.025, 0.0125, 0.00625, 0.003125], ..Default::default() };
    let report = run_convergence(&cfg).map_err(|e| e.to_string())?;
    if !report.complete {
        return Err(format!("study incomplete: {:?}", report.failure));
    }
    let (ru, rp) = (report.rate_velocity_h1.unwrap(), report.rate_pressure_l2.unwrap());
    let window = |r: f64| (0.85..=1.25).contains(&r);
    check(window(ru) && window(rp), format!("velocity H1 rate {ru:.3}, pressure L2 rate {rp:.3}, window [0.85, 1.25]"))
}

fn coercivity() -> Outcome {
    let family = family_2d(0.2, 5).map_err(|e| e.to_string())?;
    let rows = coercivity_study(&family, 1.0, 1e-10).map_err(|e| e.to_string())?;
    let slope = fitted_slope(&rows);
    let at = rows.iter().min_by(|a, b| (a.h - 0.025).abs().total_cmp(&(b.h - 0.025).abs())).unwrap();
    let reference = 9.6e-7;
    let magnitude = (at.value / reference).log10().abs() <= 1.0;
    check(
        (2.6..=3.2).contains(&slope) && magnitude,
        format!("slope {slope:.2} (need [2.6, 3.2]), value {:.2e} at h={} (reference 9.6e-7); {}", at.value, at.h, row_line(&rows)),
    )
}

fn infsup() -> Outcome {
    let family = family_2d(0.2, 5).map_err(|e| e.to_string())?;
    let rows = infsup_study(&family, 1.0, 1e-10).map_err(|e| e.to_string())?;
    let first = rows[0].value;
    let bounded = rows.iter().all(|r| r.value >= 0.5 * first);
    let window = rows.iter().all(|r| (0.05..=0.5).contains(&r.value));
    check(bounded && window, format!("min/coarsest {:.3}; {}", rows.iter().map(|r| r.value).fold(f64::MAX, f64::min) / first, row_line(&rows)))
}

fn duality() -> Outcome {
    let mesh = square_mesh(0.0, 1.0, 0.2, 0.3, 11);
    if mesh.n() > 50 {
        return Err(format!("mesh has {} boxes", mesh.n()));
    }
    let bt = assemble_bt(&mesh).map_err(|e| e.to_string())?;
    let n = mesh.n();
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut v = [random_vec(&mut r, n), random_vec(&mut r, n)];
        for k in 0..n {
            if mesh.boxes[k].on_boundary {
                v[0][k] = 0.0;
                v[1][k] = 0.0;
            }
        }
        let q = random_vec(&mut r, n);
        let flat: Vec<f64> = v[0].iter().chain(&v[1]).copied().collect();
        let b = bt.quad(&flat, &q);
        let c = continuity_form(&mesh, &v, &q);
        worst = worst.max((b + c).abs() / b.abs().max(c.abs()));
    }
    check(worst < 1e-12, format!("{n} boxes, max relative |b + c| = {worst:.2e} over 100 pairs"))
}

fn stiffness() -> Outcome {
    let mesh = square_mesh(0.0, 1.0, 0.05, 0.4, 8);
    let nu = 0.7;
    let a = assemble_a(&mesh, nu).map_err(|e| e.to_string())?;
    let k = p1_stiffness(&mesh);
    let kk = to_matrix(&mesh, &k);
    let scale = kk.diag().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for i in mesh.interior_boxes() {
        for l in 0..2 {
            for (j, kv) in kk.row(i) {
                worst = worst.max((a.get(vdof(mesh.n(), l, i), vdof(mesh.n(), l, j)) - nu * kv).abs());
            }
            for (j, av) in a.row(vdof(mesh.n(), l, i)) {
                let jj = j % mesh.n();
                if j / mesh.n() != l {
                    worst = worst.max(av.abs());
                } else {
                    worst = worst.max((av - nu * kk.get(i, jj)).abs());
                }
            }
        }
    }
    let rel = worst / (nu * scale);
    check(rel < 1e-10, format!("{} interior rows, max relative entry difference {rel:.2e}", mesh.n_interior_boxes()))
}

fn consistency() -> Outcome {
    let mut points = Vec::new();
    for (level, h) in [0.2, 0.1, 0.05, 0.025].into_iter().enumerate() {
        let mesh = square_mesh(-1.0, 1.0, h, 0.3, 21 + level as u64);
        let n = mesh.n();
        let a = assemble_a(&mesh, 1.0).map_err(|e| e.to_string())?;
        let b = assemble_b(&mesh).map_err(|e| e.to_string())?;
        let bt = assemble_bt(&mesh).map_err(|e| e.to_string())?;
        let d = diag_d(&a, n);
        let dinv: Vec<f64> =
            (0..2 * n).map(|r| if mesh.boxes[r % n].on_boundary { 0.0 } else { 1.0 / d.values[r % n] }).collect();
        let mut rg = rng(100 + level as u64);
        let mut sup = 0.0f64;
        for _ in 0..200 {
            let p = random_vec(&mut rg, n);
            let q = random_vec(&mut rg, n);
            let exact = exact_box_gradients(&mesh, &p);
            let discrete = bt.mul_vec(&p);
            let diff: Vec<f64> = (0..2 * n).map(|r| dinv[r] * (exact[r % n][r / n] - discrete[r])).collect();
            let val = b.quad(&q, &diff).abs();
            let ratio = val / (h1_seminorm(&mesh, &NodalField::new(p)) * star_seminorm(&mesh, &NodalField::new(q)));
            sup = sup.max(ratio);
        }
        points.push((mesh.primal.h(), sup));
    }
    let slope = fit_rate(&points);
    let list = points.iter().map(|(h, s)| format!("{h:.4}:{s:.3e}")).collect::<Vec<_>>().join(" ");
    check(slope >= 1.3, format!("slope {slope:.2} (need >= 1.3); {list}"))
}

fn norm_equivalence() -> Outcome {
    let tol = 1e-10;
    let mut consts: Vec<[f64; 5]> = Vec::new();
    let mut list = Vec::new();
    for (level, h) in [0.2, 0.1, 0.05, 0.025].into_iter().enumerate() {
        let mesh = square_mesh(-1.0, 1.0, h, 0.3, 31 + level as u64);
        let q = star_norm_matrix(&mesh).map_err(|e| e.to_string())?;
        let v = mass_matrix(&mesh);
        let k = to_matrix(&mesh, &p1_stiffness(&mesh));
        let m = p1_mass(&mesh);
        let e = |r: rcbm::Result<f64>| r.map_err(|e| e.to_string());
        let c1 = 1.0 / e(min_generalized_eig(&q, &v, tol))?.sqrt();
        let c2 = e(max_generalized_eig(&q, &k, tol))?.sqrt();
        let c3 = e(max_generalized_eig(&k, &q, tol))?.sqrt();
        let c4 = 1.0 / e(min_generalized_eig(&q, &m, tol))?.sqrt();
        let c5 = mesh.primal.h_min() * e(max_generalized_eig(&q, &v, tol))?.sqrt() / 2.0;
        list.push(format!("{h}:[{c1:.3},{c2:.3},{c3:.3},{c4:.3},{c5:.3}]"));
        consts.push([c1, c2, c3, c4, c5]);
    }
    let (a, b) = (consts[consts.len() - 2], consts[consts.len() - 1]);
    let variation = (0..5).map(|k| (b[k] - a[k]).abs() / a[k].max(b[k])).fold(0.0, f64::max);
    // reported only: the L2 bound is stated with constant 1, the inverse
    // estimate with 2 / h_m (normalized here to 1)
    let unit = consts.iter().all(|c| c[3] <= 1.0 && c[4] <= 1.0);
    check(
        variation < 0.2,
        format!(
            "finest-pair variation {:.1}% (need < 20%), unit normalized constants {}; {}",
            100.0 * variation,
            if unit { "hold" } else { "exceeded" },
            list.join(" ")
        ),
    )
}

fn cross_solver() -> Outcome {
    let case = case_2d();
    let mesh = build_dual(&triangulate_square(case.domain(), 0.0125, 0.0, 0).unwrap()).unwrap();
    let sys = discretize(&mesh, &case).map_err(|e| e.to_string())?;
    let mono_tol = 1e-10;
    let mono = solve_monolithic_tol(&sys, mono_tol).map_err(|e| e.to_string())?;
    let cfg = SimpleConfig { tol: 1e-8, ..Default::default() };
    let simple = simple_iterate(&sys, &cfg).map_err(|e| e.to_string())?;
    let du: Vec<NodalField> = (0..2)
        .map(|l| NodalField::new(simple.u[l].values.iter().zip(&mono.u[l].values).map(|(a, b)| a - b).collect()))
        .collect();
    let dp = NodalField::new(simple.p.values.iter().zip(&mono.p.values).map(|(a, b)| a - b).collect());
    let diff = box_triple_norm(&mesh, &du, &dp);
    let size = box_triple_norm(&mesh, &mono.u, &mono.p);
    let bound = 10.0 * (cfg.tol + mono_tol);
    check(
        diff / size < bound,
        format!("relative |||diff|||_box {:.2e} (bound {bound:.1e}), SIMPLE iterations {}", diff / size, simple.iterations),
    )
}

fn patch() -> Outcome {
    // divergence free, constant pressure
    let u = |x: &Point| [0.3 + x[0] + 2.0 * x[1], -0.1 + 3.0 * x[0] - x[1], 0.0];
    let mesh = square_mesh(0.0, 1.0, 0.05, 0.0, 0);
    let sys = apply_dirichlet(&assemble_system(&mesh, 1.0, &|_: &Point| [0.0; 3]).map_err(|e| e.to_string())?, &mesh, &u);
    let sol = solve_monolithic_tol(&sys, 1e-12).map_err(|e| e.to_string())?;
    let err: Vec<NodalField> = (0..2)
        .map(|l| NodalField::new((0..mesh.n()).map(|k| sol.u[l].values[k] - u(&mesh.boxes[k].generator)[l]).collect()))
        .collect();
    let eu = h1_seminorm_vec(&mesh, &err);
    let ep = l2_norm(&mesh, &sol.p);
    check(eu < 1e-10 && ep < 1e-10, format!("velocity H1 error {eu:.2e}, pressure L2 error {ep:.2e}"))
}

fn three_d(dir: PathBuf) -> Outcome {
    let files = mesh_files(&dir).map_err(|e| e.to_string())?;
    if files.len() < 2 {
        return Err(format!("{} holds {} mesh files", dir.display(), files.len()));
    }
    let meshes: Vec<BoxMesh> = files.iter().map(|f| read_mesh_file(f)).collect::<rcbm::Result<_>>().map_err(|e| e.to_string())?;
    let family: Vec<(f64, BoxMesh)> = meshes.iter().map(|m| (m.primal.h(), m.clone())).collect();
    let coer = coercivity_study(&family, 1.0, 1e-10).map_err(|e| e.to_string())?;
    let inf = infsup_study(&family, 1.0, 1e-10).map_err(|e| e.to_string())?;
    let slope = fitted_slope(&coer);
    let bounded = inf.iter().all(|r| r.value >= 0.5 * inf[0].value);
    let cfg = StudyConfig { case: "3d".into(), mesh_dir: Some(dir), ..Default::default() };
    let report = run_convergence_on(&cfg.manufactured_case(), &meshes, &cfg);
    check(
        (2.5..=3.1).contains(&slope) && bounded && report.complete,
        format!("coercivity slope {slope:.2} (need [2.5, 3.1]); inf-sup {}; velocity rate {:?}", row_line(&inf), report.rate_velocity_h1),
    )
}

fn main() -> ExitCode {
    // libtest flags such as --list must not run the suite
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 convergence", convergence),
        ("2 coercivity", coercivity),
        ("3 inf-sup", infsup),
        ("4 duality", duality),
        ("5 stiffness", stiffness),
        ("6 consistency", consistency),
        ("7 norm equivalence", norm_equivalence),
        ("8 cross-solver", cross_solver),
        ("9 patch test", patch),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{secs:.1}s]");
            }
        }
    }
    match std::env::var_os("RCBM_MESH3D_DIR") {
        None => println!("SKIP criterion 3D: RCBM_MESH3D_DIR not set"),
        Some(dir) => match three_d(PathBuf::from(dir)) {
            Ok(d) => println!("PASS criterion 3D: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion 3D: {d}");
            }
        },
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
