//! Manufactured-solution convergence studies, error norms, configuration and
//! result files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{apply_dirichlet, assemble_system};
use crate::fields::cell_gradient;
use crate::mesh::geom::orient2d;
use crate::mesh::io::read_mesh_file;
use crate::mesh::{build_dual, triangulate_square, BoxMesh, Rect};
use crate::quadrature::SimplexRule;
use crate::solver::{simple_iterate, solve_monolithic, SimpleConfig, StokesSolution};
use crate::{Error, Point, Result};

pub type Grad = [[f64; 3]; 3];

/// Analytic Stokes solution with forcing f = -nu lap(u) + grad(p).
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub dim: usize,
    pub nu: f64,
    /// Domain [lo, hi]^dim.
    pub lo: f64,
    pub hi: f64,
    pub u: fn(&Point) -> Point,
    /// grad_u[l][a] = d u_l / d x_a.
    pub grad_u: fn(&Point) -> Grad,
    pub lap_u: fn(&Point) -> Point,
    pub p: fn(&Point) -> f64,
    pub grad_p: fn(&Point) -> Point,
}

impl ManufacturedCase {
    pub fn forcing(&self, x: &Point) -> Point {
        let l = (self.lap_u)(x);
        let g = (self.grad_p)(x);
        [-self.nu * l[0] + g[0], -self.nu * l[1] + g[1], -self.nu * l[2] + g[2]]
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn domain(&self) -> Rect {
        Rect::square(self.lo, self.hi)
    }
}

fn s(t: f64) -> f64 {
    (2.0 * PI * t).sin()
}

fn c(t: f64) -> f64 {
    (2.0 * PI * t).cos()
}

fn u2(x: &Point) -> Point {
    [-s(x[1]) * c(x[0]), s(x[0]) * c(x[1]), 0.0]
}

fn grad_u2(x: &Point) -> Grad {
    let k = 2.0 * PI;
    [
        [k * s(x[1]) * s(x[0]), -k * c(x[1]) * c(x[0]), 0.0],
        [k * c(x[0]) * c(x[1]), -k * s(x[0]) * s(x[1]), 0.0],
        [0.0; 3],
    ]
}

fn lap_u2(x: &Point) -> Point {
    let u = u2(x);
    let k = -8.0 * PI * PI;
    [k * u[0], k * u[1], 0.0]
}

fn p2(x: &Point) -> f64 {
    -0.25 * ((4.0 * PI * x[0]).cos() + (4.0 * PI * x[1]).cos())
}

fn grad_p2(x: &Point) -> Point {
    [PI * (4.0 * PI * x[0]).sin(), PI * (4.0 * PI * x[1]).sin(), 0.0]
}

fn u3(x: &Point) -> Point {
    let (sx, sy, sz) = (s(x[0]), s(x[1]), s(x[2]));
    let (cx, cy, cz) = (c(x[0]), c(x[1]), c(x[2]));
    [sy * sz * cx, sx * sz * cy, -2.0 * sx * sy * cz]
}

fn grad_u3(x: &Point) -> Grad {
    let k = 2.0 * PI;
    let (sx, sy, sz) = (s(x[0]), s(x[1]), s(x[2]));
    let (cx, cy, cz) = (c(x[0]), c(x[1]), c(x[2]));
    [
        [-k * sy * sz * sx, k * cy * sz * cx, k * sy * cz * cx],
        [k * cx * sz * cy, -k * sx * sz * sy, k * sx * cz * cy],
        [-2.0 * k * cx * sy * cz, -2.0 * k * sx * cy * cz, 2.0 * k * sx * sy * sz],
    ]
}

fn lap_u3(x: &Point) -> Point {
    let u = u3(x);
    let k = -12.0 * PI * PI;
    [k * u[0], k * u[1], k * u[2]]
}

fn p3(x: &Point) -> f64 {
    -0.125 * ((4.0 * PI * x[0]).cos() + (4.0 * PI * x[1]).cos() + (4.0 * PI * x[2]).cos())
}

fn grad_p3(x: &Point) -> Point {
    let k = 0.5 * PI;
    [k * (4.0 * PI * x[0]).sin(), k * (4.0 * PI * x[1]).sin(), k * (4.0 * PI * x[2]).sin()]
}

/// Vortex flow on [-1/4, 1/4]^2 with nu = 1.
pub fn case_2d() -> ManufacturedCase {
    ManufacturedCase { name: "2d", dim: 2, nu: 1.0, lo: -0.25, hi: 0.25, u: u2, grad_u: grad_u2, lap_u: lap_u2, p: p2, grad_p: grad_p2 }
}

/// Three-dimensional analogue on [-1/4, 1/4]^3 with nu = 1.
pub fn case_3d() -> ManufacturedCase {
    ManufacturedCase { name: "3d", dim: 3, nu: 1.0, lo: -0.25, hi: 0.25, u: u3, grad_u: grad_u3, lap_u: lap_u3, p: p3, grad_p: grad_p3 }
}

/// Assemble, impose the boundary trace and return the eliminated system.
pub fn discretize(mesh: &BoxMesh, case: &ManufacturedCase) -> Result<crate::assembly::SaddleSystem> {
    if mesh.dim != case.dim {
        return Err(Error::Config(format!("case {} needs a {}D mesh", case.name, case.dim)));
    }
    let f = |x: &Point| case.forcing(x);
    let sys = assemble_system(mesh, case.nu, &f)?;
    Ok(apply_dirichlet(&sys, mesh, &case.u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Errors {
    /// |u_h - u|_{H1}, P1 gradients against the exact gradient.
    pub velocity_h1: f64,
    /// ||Pi p_h - p||_{L2} over the control volumes, both mean-zeroed.
    pub pressure_l2: f64,
    /// ||p_h - p||_{L2} with p_h as a P1 field, both mean-zeroed.
    pub pressure_l2_p1: f64,
}

/// Integrate `g` over every primal cell with a degree-`deg` rule.
fn cell_integral(mesh: &BoxMesh, deg: usize, mut g: impl FnMut(usize, &Point) -> f64) -> f64 {
    let p = &mesh.primal;
    let rule = SimplexRule::new(p.dim, deg);
    let mut total = 0.0;
    for cell in 0..p.n_cells() {
        let pts = p.cell_points(cell);
        let vol = p.cell_measure(cell);
        for (x, w) in rule.map(&pts) {
            total += vol * w * g(cell, &x);
        }
    }
    total
}

/// Integrate `g(box, x)` over every control volume (2D fans with a
/// degree-`deg` rule, one point at the generator otherwise).
fn box_integral(mesh: &BoxMesh, deg: usize, mut g: impl FnMut(usize, &Point) -> f64) -> f64 {
    let rule = SimplexRule::new(2, deg);
    let mut total = 0.0;
    for k in 0..mesh.n() {
        match mesh.fan(k) {
            Some(fan) => {
                for tri in &fan {
                    let area = 0.5 * orient2d(&tri[0], &tri[1], &tri[2]);
                    for (x, w) in rule.map(tri) {
                        total += area * w * g(k, &x);
                    }
                }
            }
            None => total += mesh.boxes[k].volume * g(k, &mesh.boxes[k].generator),
        }
    }
    total
}

pub fn compute_errors_deg(mesh: &BoxMesh, sol: &StokesSolution, case: &ManufacturedCase, deg: usize) -> Errors {
    let dim = mesh.dim;
    let grads: Vec<Vec<Point>> =
        (0..mesh.primal.n_cells()).map(|c| sol.u.iter().map(|ul| cell_gradient(mesh, c, ul)).collect()).collect();
    let eu = cell_integral(mesh, deg, |cell, x| {
        let g = (case.grad_u)(x);
        let mut e = 0.0;
        for l in 0..dim {
            for a in 0..dim {
                e += (grads[cell][l][a] - g[l][a]).powi(2);
            }
        }
        e
    });

    let vol = mesh.total_volume();
    let exact_mean = box_integral(mesh, deg, |_, x| (case.p)(x)) / vol;
    let ph = &sol.p.values;
    let h_mean = mesh.boxes.iter().zip(ph).map(|(b, v)| b.volume * v).sum::<f64>() / vol;
    let ep = box_integral(mesh, deg, |k, x| (ph[k] - h_mean - (case.p)(x) + exact_mean).powi(2));

    let p1_mean_exact = cell_integral(mesh, deg, |_, x| (case.p)(x)) / mesh.primal.measure();
    let p1_mean_h = cell_integral(mesh, 1, |cell, x| p1_value(mesh, cell, ph, x)) / mesh.primal.measure();
    let ep1 = cell_integral(mesh, deg, |cell, x| {
        (p1_value(mesh, cell, ph, x) - p1_mean_h - (case.p)(x) + p1_mean_exact).powi(2)
    });
    Errors { velocity_h1: eu.sqrt(), pressure_l2: ep.sqrt(), pressure_l2_p1: ep1.sqrt() }
}

/// Velocity H1 and pressure L2 errors with the degree-6 rule.
pub fn compute_errors(mesh: &BoxMesh, sol: &StokesSolution, case: &ManufacturedCase) -> Errors {
    compute_errors_deg(mesh, sol, case, 6)
}

fn p1_value(mesh: &BoxMesh, cell: usize, v: &[f64], x: &Point) -> f64 {
    let p = &mesh.primal;
    let verts = p.cell(cell);
    let pts = p.cell_points(cell);
    let grads = crate::mesh::geom::barycentric_gradients(p.dim, &pts).expect("valid primal cell");
    // lambda_k(x) = lambda_k(x0) + grad_k . (x - x0), lambda_k(x0) = delta_k0
    let mut out = 0.0;
    for (k, &vert) in verts.iter().enumerate() {
        let mut lam = if k == 0 { 1.0 } else { 0.0 };
        for a in 0..3 {
            lam += grads[k][a] * (x[a] - pts[0][a]);
        }
        out += lam * v[vert];
    }
    out
}

/// Least-squares slope of log(error) against log(h).
pub fn fit_rate(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Monolithic,
    Simple,
}

/// Study configuration, read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// "2d" or "3d".
    pub case: String,
    /// Target mesh sizes for generated 2D meshes.
    pub levels: Vec<f64>,
    pub nu: f64,
    pub solver: SolverKind,
    pub jitter: f64,
    pub seed: u64,
    /// Directory of imported mesh files (3D), read in name order.
    pub mesh_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub simple: SimpleConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            case: "2d".into(),
            levels: vec![0.025, 0.0125, 0.00625, 0.003125],
            nu: 1.0,
            solver: SolverKind::Monolithic,
            jitter: 0.0,
            seed: 0,
            mesh_dir: None,
            output_dir: None,
            simple: SimpleConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.case != "2d" && self.case != "3d" {
            return Err(Error::Config(format!("unknown case {:?}", self.case)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::Config("nu must be positive".into()));
        }
        if self.case == "2d" && (self.levels.is_empty() || self.levels.iter().any(|h| !(*h > 0.0))) {
            return Err(Error::Config("levels must be positive mesh sizes".into()));
        }
        if self.case == "3d" && self.mesh_dir.is_none() {
            return Err(Error::Config("3d case needs mesh_dir with imported meshes".into()));
        }
        self.simple.validate()
    }

    pub fn manufactured_case(&self) -> ManufacturedCase {
        let case = if self.case == "3d" { case_3d() } else { case_2d() };
        case.with_nu(self.nu)
    }
}

/// Mesh files in `dir` with the `.mesh` extension, in name order.
pub fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mesh"))
        .collect();
    files.sort();
    Ok(files)
}

/// Generate (2D) or import (3D) the mesh of every level.
pub fn study_meshes(cfg: &StudyConfig) -> Result<Vec<BoxMesh>> {
    match &cfg.mesh_dir {
        Some(dir) => mesh_files(dir)?.iter().map(|p| read_mesh_file(p)).collect(),
        None => {
            let case = cfg.manufactured_case();
            cfg.levels
                .iter()
                .map(|&h| build_dual(&triangulate_square(case.domain(), h, cfg.jitter, cfg.seed)?))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: f64,
    pub vertices: usize,
    pub errors: Errors,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub case: String,
    pub nu: f64,
    pub solver: SolverKind,
    pub build: String,
    pub rows: Vec<StudyRow>,
    pub rate_velocity_h1: Option<f64>,
    pub rate_pressure_l2: Option<f64>,
    pub rate_pressure_l2_p1: Option<f64>,
    /// Fewer than three levels: rates are indicative only.
    pub low_confidence: bool,
    pub complete: bool,
    pub failure: Option<String>,
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,vertices,e_u_h1,e_p_l2,e_p_l2_p1,residual,iterations\n");
        for r in &self.rows {
            let e = r.errors;
            let _ = writeln!(
                out,
                "{:.6e},{},{:.6e},{:.6e},{:.6e},{:.3e},{}",
                r.h, r.vertices, e.velocity_h1, e.pressure_l2, e.pressure_l2_p1, r.residual, r.iterations
            );
        }
        let fmt = |r: Option<f64>| r.map_or("nan".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            out,
            "# rates,,{},{},{},,",
            fmt(self.rate_velocity_h1),
            fmt(self.rate_pressure_l2),
            fmt(self.rate_pressure_l2_p1)
        );
        out
    }

    /// Whitespace-separated columns for log-log plotting.
    pub fn to_plot_data(&self) -> String {
        let mut out = String::from("# h e_u_h1 e_p_l2 e_p_l2_p1\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:e} {:e} {:e} {:e}", r.h, r.errors.velocity_h1, r.errors.pressure_l2, r.errors.pressure_l2_p1);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Write report.csv, report.json, convergence.dat and config.toml.
    pub fn write(&self, dir: &Path, cfg: &StudyConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("report.json"), self.to_json())?;
        fs::write(dir.join("convergence.dat"), self.to_plot_data())?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        Ok(())
    }
}

pub fn build_id() -> String {
    format!("rcbm-{}", env!("CARGO_PKG_VERSION"))
}

/// Solve the case on one mesh with the configured solver.
pub fn solve_case(mesh: &BoxMesh, case: &ManufacturedCase, cfg: &StudyConfig) -> Result<StokesSolution> {
    let sys = discretize(mesh, case)?;
    match cfg.solver {
        SolverKind::Monolithic => solve_monolithic(&sys),
        SolverKind::Simple => simple_iterate(&sys, &cfg.simple),
    }
}

/// Run the study on the given meshes (coarse to fine). A failing level stops
/// the study and yields a report flagged incomplete.
pub fn run_convergence_on(case: &ManufacturedCase, meshes: &[BoxMesh], cfg: &StudyConfig) -> StudyReport {
    let mut rows = Vec::new();
    let mut failure = None;
    for mesh in meshes {
        match solve_case(mesh, case, cfg) {
            Ok(sol) => rows.push(StudyRow {
                h: mesh.primal.h(),
                vertices: mesh.n(),
                errors: compute_errors(mesh, &sol, case),
                residual: *sol.residuals.last().unwrap_or(&f64::NAN),
                iterations: sol.iterations,
            }),
            Err(e) => {
                failure = Some(format!("level h = {:.4e}: {e}", mesh.primal.h()));
                break;
            }
        }
    }
    rows.sort_by(|a, b| b.h.total_cmp(&a.h));
    let rate = |pick: fn(&Errors) -> f64| {
        (rows.len() >= 2).then(|| fit_rate(&rows.iter().map(|r| (r.h, pick(&r.errors))).collect::<Vec<_>>()))
    };
    StudyReport {
        case: case.name.to_string(),
        nu: case.nu,
        solver: cfg.solver,
        build: build_id(),
        rate_velocity_h1: rate(|e| e.velocity_h1),
        rate_pressure_l2: rate(|e| e.pressure_l2),
        rate_pressure_l2_p1: rate(|e| e.pressure_l2_p1),
        low_confidence: rows.len() < 3,
        complete: failure.is_none(),
        failure,
        rows,
    }
}

pub fn run_convergence(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let case = cfg.manufactured_case();
    let meshes = study_meshes(cfg)?;
    Ok(run_convergence_on(&case, &meshes, cfg))
}

/// Nodal fields as CSV: x, y, z, u_0.., p.
pub fn fields_csv(mesh: &BoxMesh, sol: &StokesSolution) -> String {
    let mut out = String::from("x,y,z");
    for l in 0..sol.u.len() {
        let _ = write!(out, ",u{l}");
    }
    out.push_str(",p\n");
    for (k, v) in mesh.primal.vertices.iter().enumerate() {
        let _ = write!(out, "{:.10e},{:.10e},{:.10e}", v[0], v[1], v[2]);
        for ul in &sol.u {
            let _ = write!(out, ",{:.10e}", ul.values[k]);
        }
        let _ = writeln!(out, ",{:.10e}", sol.p.values[k]);
    }
    out
}

pub fn residuals_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,residual\n");
    for (k, r) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{:.6e}", k + 1, r);
    }
    out
}

#[cfg(test)]
mod tests;
