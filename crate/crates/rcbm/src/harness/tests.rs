use super::*;
use crate::fields::interpolate_vector;
use crate::fields::interpolate;
use crate::testkit::rng;
use rand::Rng;

fn exact_solution(mesh: &BoxMesh, case: &ManufacturedCase) -> StokesSolution {
    StokesSolution {
        u: interpolate_vector(mesh, case.u),
        p: interpolate(mesh, case.p),
        residuals: vec![],
        iterations: 0,
    }
}

// Central differences of the analytic fields, independent of the closed forms.
fn fd_grad(f: impl Fn(&Point) -> f64, x: &Point, dim: usize) -> Point {
    let e = 1e-5;
    let mut g = [0.0; 3];
    for a in 0..dim {
        let mut xp = *x;
        let mut xm = *x;
        xp[a] += e;
        xm[a] -= e;
        g[a] = (f(&xp) - f(&xm)) / (2.0 * e);
    }
    g
}

#[test]
fn manufactured_velocities_are_divergence_free() {
    for case in [case_2d(), case_3d()] {
        let mut r = rng(1);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let x = [r.random_range(-0.25..0.25), r.random_range(-0.25..0.25), if case.dim == 3 { r.random_range(-0.25..0.25) } else { 0.0 }];
            let g = (case.grad_u)(&x);
            worst = worst.max((0..case.dim).map(|l| g[l][l]).sum::<f64>().abs());
        }
        assert!(worst < 1e-12, "{} {worst}", case.name);
    }
}

#[test]
fn closed_form_derivatives_match_finite_differences() {
    let mut r = rng(2);
    for case in [case_2d(), case_3d()] {
        let d = case.dim;
        for _ in 0..50 {
            let x = [r.random_range(-0.25..0.25), r.random_range(-0.25..0.25), if d == 3 { r.random_range(-0.25..0.25) } else { 0.0 }];
            let g = (case.grad_u)(&x);
            for l in 0..d {
                let fd = fd_grad(|y| (case.u)(y)[l], &x, d);
                for a in 0..d {
                    assert!((fd[a] - g[l][a]).abs() < 1e-6);
                }
                // Laplacian as the divergence of the gradient row.
                let mut lap = 0.0;
                for a in 0..d {
                    lap += fd_grad(|y| (case.grad_u)(y)[l][a], &x, d)[a];
                }
                assert!((lap - (case.lap_u)(&x)[l]).abs() < 1e-4);
            }
            let gp = fd_grad(case.p, &x, d);
            for a in 0..d {
                assert!((gp[a] - (case.grad_p)(&x)[a]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn forcing_vanishes_at_the_origin_and_pressure_has_zero_mean() {
    for case in [case_2d(), case_3d()] {
        let f = case.forcing(&[0.0; 3]);
        assert!(f.iter().all(|x| x.abs() < 1e-12));
    }
    // Midpoint sum over a fine grid: full cosine periods integrate to zero.
    let case = case_2d();
    let n = 400;
    let h = 0.5 / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (case.p)(&[-0.25 + (i as f64 + 0.5) * h, -0.25 + (j as f64 + 0.5) * h, 0.0]) * h * h;
        }
    }
    assert!(s.abs() < 1e-12);
}

#[test]
fn fit_rate_recovers_powers() {
    let hs = [0.1, 0.05, 0.025, 0.0125];
    assert!((fit_rate(&hs.map(|h| (h, 3.0 * h))) - 1.0).abs() < 1e-12);
    assert!((fit_rate(&hs.map(|h| (h, 0.5 * h * h))) - 2.0).abs() < 1e-12);
    let mut r = rng(3);
    let noisy: Vec<(f64, f64)> = hs.iter().map(|&h| (h, h * (1.0 + r.random_range(-0.05..0.05)))).collect();
    assert!((fit_rate(&noisy) - 1.0).abs() < 0.1);
}

#[test]
fn interpolant_errors_have_interpolation_rates() {
    let case = case_2d();
    let mut eu = Vec::new();
    let mut ep = Vec::new();
    let mut ep1 = Vec::new();
    for h in [0.05, 0.025, 0.0125] {
        let m = build_dual(&triangulate_square(case.domain(), h, 0.0, 0).unwrap()).unwrap();
        let e = compute_errors(&m, &exact_solution(&m, &case), &case);
        eu.push((m.primal.h(), e.velocity_h1));
        ep.push((m.primal.h(), e.pressure_l2));
        ep1.push((m.primal.h(), e.pressure_l2_p1));
    }
    assert!((fit_rate(&eu) - 1.0).abs() < 0.1, "{}", fit_rate(&eu));
    // Lumping a smooth field costs one order; the P1 interpolant converges at two.
    assert!((fit_rate(&ep) - 1.0).abs() < 0.15, "{}", fit_rate(&ep));
    assert!((fit_rate(&ep1) - 2.0).abs() < 0.15, "{}", fit_rate(&ep1));
}

#[test]
fn error_quadrature_is_converged() {
    let case = case_2d();
    let m = build_dual(&triangulate_square(case.domain(), 0.05, 0.3, 4).unwrap()).unwrap();
    let sol = exact_solution(&m, &case);
    let a = compute_errors_deg(&m, &sol, &case, 6);
    let b = compute_errors_deg(&m, &sol, &case, 12);
    for (x, y) in [(a.velocity_h1, b.velocity_h1), (a.pressure_l2, b.pressure_l2), (a.pressure_l2_p1, b.pressure_l2_p1)] {
        assert!((x - y).abs() < 1e-3 * y);
    }
}

#[test]
fn linear_flow_has_zero_interpolation_error() {
    fn u(x: &Point) -> Point {
        [1.0 + 2.0 * x[0] - x[1], 0.5 - 3.0 * x[0] - 2.0 * x[1], 0.0]
    }
    fn gu(_: &Point) -> Grad {
        [[2.0, -1.0, 0.0], [-3.0, -2.0, 0.0], [0.0; 3]]
    }
    fn zero(_: &Point) -> Point {
        [0.0; 3]
    }
    fn p(_: &Point) -> f64 {
        4.0
    }
    let case = ManufacturedCase { name: "linear", dim: 2, nu: 1.0, lo: -0.25, hi: 0.25, u, grad_u: gu, lap_u: zero, p, grad_p: zero };
    let m = build_dual(&triangulate_square(case.domain(), 0.1, 0.4, 1).unwrap()).unwrap();
    let e = compute_errors(&m, &exact_solution(&m, &case), &case);
    assert!(e.velocity_h1 < 1e-12 && e.pressure_l2 < 1e-12 && e.pressure_l2_p1 < 1e-12);
}

#[test]
fn config_round_trips_and_validates() {
    let cfg = StudyConfig::default();
    let back = StudyConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back.levels, cfg.levels);
    let parsed = StudyConfig::from_toml("case = \"2d\"\nlevels = [0.1, 0.05]\nsolver = \"simple\"\n[simple]\nalpha_u = 0.8\n").unwrap();
    assert_eq!(parsed.solver, SolverKind::Simple);
    assert_eq!(parsed.simple.alpha_u, 0.8);
    assert_eq!(parsed.simple.alpha_p, 0.3);
    assert!(StudyConfig::from_toml("case = \"4d\"").is_err());
    assert!(StudyConfig::from_toml("nu = -1.0").is_err());
    assert!(StudyConfig::from_toml("[simple]\nalpha_p = 1.2").is_err());
    assert!(StudyConfig::from_toml("case = \"3d\"").is_err());
    assert!(StudyConfig::from_toml("bogus = 1").is_err());
}

#[test]
fn two_level_study_is_low_confidence_and_deterministic() {
    let cfg = StudyConfig { levels: vec![0.1, 0.05], ..StudyConfig::default() };
    let a = run_convergence(&cfg).unwrap();
    let b = run_convergence(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.low_confidence && a.complete);
    assert_eq!(a.rows.len(), 2);
    assert!(a.rows[0].h > a.rows[1].h);
    assert!(a.rows[1].errors.velocity_h1 < a.rows[0].errors.velocity_h1);
    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path(), &cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: StudyReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json, a);
}

#[test]
fn wrong_dimension_mesh_yields_incomplete_report() {
    let m = build_dual(&triangulate_square(Rect::square(-0.25, 0.25), 0.1, 0.0, 0).unwrap()).unwrap();
    let rep = run_convergence_on(&case_3d(), &[m], &StudyConfig::default());
    assert!(!rep.complete && rep.failure.is_some() && rep.rows.is_empty());
}
