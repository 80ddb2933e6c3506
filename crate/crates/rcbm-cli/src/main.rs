use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rcbm::assembly::{assemble_system, apply_dirichlet};
use rcbm::harness::{
    case_2d, compute_errors, discretize, fields_csv, mesh_files, residuals_csv, run_convergence, StudyConfig,
};
use rcbm::mesh::io::{read_mesh_file, write_mesh_file};
use rcbm::mesh::{build_dual, quality_report, triangulate_square, BoxMesh, QualityThresholds, Rect};
use rcbm::solver::{simple_iterate, solve_monolithic, SimpleConfig};
use rcbm::spectral::{
    coercivity_study, family_2d, fitted_slope, infsup_study, mass_matrix, rows_csv, star_norm_matrix, EigStudyRow,
};
use rcbm::Point;

#[derive(Parser)]
#[command(name = "rcbm", version, about = "Rhie-Chow stabilized Box Method for steady Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, inspect or export box meshes.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
    /// Solve the manufactured 2D case on one mesh and write nodal fields.
    Solve(SolveArgs),
    /// Coercivity or inf-sup eigenvalue study over a mesh family.
    Spectra(SpectraArgs),
    /// Manufactured-solution convergence study driven by a TOML config.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct MeshSource {
    /// Read this mesh file instead of generating one.
    #[arg(long, conflicts_with_all = ["h", "jitter", "seed"])]
    mesh: Option<PathBuf>,
    /// Target mesh size of a generated triangulation.
    #[arg(long, default_value_t = 0.05)]
    h: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl MeshSource {
    fn load(&self, domain: Rect) -> Result<BoxMesh> {
        match &self.mesh {
            Some(p) => read_mesh_file(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(build_dual(&triangulate_square(domain, self.h, self.jitter, self.seed)?)?),
        }
    }
}

#[derive(Subcommand)]
enum MeshAction {
    /// Triangulate a square and write its dual.
    Generate {
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print a quality report as JSON.
    Inspect {
        file: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        min_distance_ratio: f64,
        #[arg(long, default_value_t = 0.01)]
        min_area_ratio: f64,
    },
    /// Write A, Bt, B, C, Q and V in MatrixMarket format.
    Export {
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Monolithic,
    Simple,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: MeshSource,
    #[arg(long, value_enum, default_value_t = Solver::Monolithic)]
    solver: Solver,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Output directory for fields.csv and residuals.csv.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Study {
    Coercivity,
    Infsup,
}

#[derive(Args)]
struct SpectraArgs {
    #[arg(long, value_enum)]
    study: Study,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    dim: u8,
    /// Number of generated 2D levels, h = h0 / 2^k.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 0.2)]
    h0: f64,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Imported mesh family (required for --dim 3).
    #[arg(long)]
    mesh_dir: Option<PathBuf>,
    /// CSV output (h,value,rate); stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Exit nonzero if the study misses its acceptance thresholds.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides output_dir of the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Exit nonzero if a rate falls outside [0.85, 1.25] or the study fails.
    #[arg(long)]
    assert: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Ok(false) means the run finished but an asserted threshold failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Mesh { action } => mesh(action).map(|_| true),
        Command::Solve(args) => solve(args).map(|_| true),
        Command::Spectra(args) => spectra(args),
        Command::Convergence(args) => convergence(args),
    }
}

fn mesh(action: MeshAction) -> Result<()> {
    match action {
        MeshAction::Generate { lo, hi, h, jitter, seed, out } => {
            if !(hi > lo) {
                bail!("empty domain [{lo}, {hi}]");
            }
            let m = build_dual(&triangulate_square(Rect::square(lo, hi), h, jitter, seed)?)?;
            write_mesh_file(&m, &out)?;
            println!("{} vertices, {} cells, {} faces -> {}", m.n(), m.primal.n_cells(), m.faces.len(), out.display());
        }
        MeshAction::Inspect { file, min_distance_ratio, min_area_ratio } => {
            let m = read_mesh_file(&file).with_context(|| format!("reading {}", file.display()))?;
            let report = quality_report(&m, QualityThresholds { min_distance_ratio, min_area_ratio });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        MeshAction::Export { file, nu, out } => {
            let m = read_mesh_file(&file).with_context(|| format!("reading {}", file.display()))?;
            let zero = |_: &Point| [0.0; 3];
            let sys = apply_dirichlet(&assemble_system(&m, nu, &zero)?, &m, &zero);
            fs::create_dir_all(&out)?;
            let q = star_norm_matrix(&m)?;
            let v = mass_matrix(&m);
            for (name, mat) in [("A", &sys.a), ("Bt", &sys.bt), ("B", &sys.b), ("C", &sys.c), ("Q", &q), ("V", &v)] {
                let path = out.join(format!("{name}.mtx"));
                mat.write_matrix_market(fs::File::create(&path)?)?;
            }
            println!("wrote A, Bt, B, C, Q, V to {}", out.display());
        }
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let case = case_2d().with_nu(args.nu);
    let m = args.source.load(case.domain())?;
    let sys = discretize(&m, &case)?;
    let sol = match args.solver {
        Solver::Monolithic => solve_monolithic(&sys)?,
        Solver::Simple => simple_iterate(&sys, &SimpleConfig { tol: args.tol, ..Default::default() })?,
    };
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("fields.csv"), fields_csv(&m, &sol))?;
    fs::write(args.out.join("residuals.csv"), residuals_csv(&sol.residuals))?;
    let e = compute_errors(&m, &sol, &case);
    println!(
        "h {:.4e}, {} vertices, {} iterations, residual {:.2e}, velocity H1 error {:.4e}, pressure L2 error {:.4e}",
        m.primal.h(),
        m.n(),
        sol.iterations,
        sol.residuals.last().copied().unwrap_or(f64::NAN),
        e.velocity_h1,
        e.pressure_l2
    );
    Ok(())
}

fn family(args: &SpectraArgs) -> Result<Vec<(f64, BoxMesh)>> {
    match (args.dim, &args.mesh_dir) {
        (_, Some(dir)) => {
            let files = mesh_files(dir)?;
            if files.is_empty() {
                bail!("no .mesh files in {}", dir.display());
            }
            let meshes = files.iter().map(|f| read_mesh_file(f)).collect::<rcbm::Result<Vec<_>>>()?;
            if meshes.iter().any(|m| m.dim != args.dim as usize) {
                bail!("mesh family does not match --dim {}", args.dim);
            }
            let mut fam: Vec<(f64, BoxMesh)> = meshes.into_iter().map(|m| (m.primal.h(), m)).collect();
            fam.sort_by(|a, b| b.0.total_cmp(&a.0));
            Ok(fam)
        }
        (3, None) => bail!("--dim 3 needs --mesh-dir with imported meshes"),
        _ => Ok(family_2d(args.h0, args.levels)?),
    }
}

fn study_passes(study: Study, dim: u8, rows: &[EigStudyRow]) -> bool {
    match study {
        Study::Coercivity => {
            let window = if dim == 2 { 2.6..=3.2 } else { 2.5..=3.1 };
            rows.len() >= 2 && window.contains(&fitted_slope(rows))
        }
        Study::Infsup => rows.iter().all(|r| r.value >= 0.5 * rows[0].value),
    }
}

fn spectra(args: SpectraArgs) -> Result<bool> {
    let fam = family(&args)?;
    let rows = match args.study {
        Study::Coercivity => coercivity_study(&fam, args.nu, args.tol)?,
        Study::Infsup => infsup_study(&fam, args.nu, args.tol)?,
    };
    let csv = rows_csv(&rows);
    match &args.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    if rows.len() >= 2 {
        eprintln!("fitted slope {:.3}", fitted_slope(&rows));
    }
    Ok(!args.assert || study_passes(args.study, args.dim, &rows))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn convergence(args: ConvergenceArgs) -> Result<bool> {
    let mut cfg = StudyConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(out) = args.out {
        cfg.output_dir = Some(out);
    }
    let report = run_convergence(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        report.write(dir, &cfg)?;
    }
    print!("{}", report.to_csv());
    if let Some(f) = &report.failure {
        eprintln!("study incomplete: {f}");
    }
    let window = |r: Option<f64>| r.is_some_and(|r| (0.85..=1.25).contains(&r));
    let ok = report.complete && window(report.rate_velocity_h1) && window(report.rate_pressure_l2);
    Ok(!args.assert || ok)
}
