//! Minimum generalized Rayleigh quotients: the coercivity of the Rhie-Chow
//! matrix against the *-norm, and the generalized inf-sup constant of the
//! stabilized Schur complement against the box mass matrix.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{apply_dirichlet, assemble_q, assemble_system, SaddleSystem, SparseMatrix};
use crate::harness::fit_rate;
use crate::linalg::{dot, SparseCholesky};
use crate::mesh::{build_dual, triangulate_square, BoxMesh, Rect};
use crate::solver::GroundedSaddle;
use crate::{Error, Point, Result};

/// Problems up to this size are solved with a dense eigendecomposition.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigStudyRow {
    pub h: f64,
    pub value: f64,
    /// log2(value(h_prev) / value(h)) scaled by the actual refinement ratio.
    pub rate: Option<f64>,
}

/// The *-norm matrix Q: q^T Q q = |q|_*^2.
pub fn star_norm_matrix(mesh: &BoxMesh) -> Result<SparseMatrix> {
    assemble_q(mesh)
}

/// H = blockdiag(Q, ..., Q), one block per velocity component.
pub fn star_norm_matrix_vec(mesh: &BoxMesh) -> Result<SparseMatrix> {
    let q = assemble_q(mesh)?;
    let n = mesh.n();
    let t = (0..mesh.dim)
        .flat_map(|l| q.triplets().into_iter().map(move |(r, c, v)| (l * n + r, l * n + c, v)))
        .collect();
    Ok(SparseMatrix::from_triplets(mesh.dim * n, mesh.dim * n, t))
}

/// Diagonal box mass matrix V_ii = |B_i|.
pub fn mass_matrix(mesh: &BoxMesh) -> SparseMatrix {
    SparseMatrix::diagonal(&mesh.volumes())
}

/// How the constant vector is removed from the pencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Deflation {
    None,
    /// Both matrices annihilate constants: drop one node.
    Ground,
    /// Only S annihilates constants: restrict to the M-orthogonal complement.
    Complement,
}

fn kills_constants(a: &SparseMatrix) -> bool {
    let scale = a.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let r = a.mul_vec(&vec![1.0; a.ncols]);
    r.iter().all(|x| x.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE))
}

fn symmetrized(a: &SparseMatrix, what: &str) -> Result<SparseMatrix> {
    if a.nrows != a.ncols {
        return Err(Error::Eigen(format!("{what} is not square")));
    }
    let asym = a.asymmetry();
    if asym > 1e-10 {
        return Err(Error::Eigen(format!("{what} is not symmetric (relative asymmetry {asym:e})")));
    }
    Ok(a.add_scaled(&a.transpose(), 1.0).scaled(0.5))
}

/// min over the admissible space of q^T S q / q^T M q.
///
/// S is symmetrized first. When S annihilates constants they are deflated:
/// by grounding one node if M does too, otherwise by restricting to the
/// M-orthogonal complement. Dense eigendecomposition up to DENSE_LIMIT
/// unknowns, shift-invert Lanczos beyond.
pub fn min_generalized_eig(s: &SparseMatrix, m: &SparseMatrix, tol: f64) -> Result<f64> {
    min_generalized_eig_with(s, m, tol, DENSE_LIMIT)
}

/// As `min_generalized_eig` with an explicit dense/iterative threshold.
pub fn min_generalized_eig_with(s: &SparseMatrix, m: &SparseMatrix, tol: f64, dense_limit: usize) -> Result<f64> {
    let s = symmetrized(s, "S")?;
    let m = symmetrized(m, "M")?;
    if s.nrows != m.nrows {
        return Err(Error::Eigen("S and M differ in size".into()));
    }
    let n = s.nrows;
    let mode = match (kills_constants(&s), kills_constants(&m)) {
        (true, true) => Deflation::Ground,
        (true, false) => Deflation::Complement,
        (false, true) => return Err(Error::Eigen("M is singular on constants but S is not".into())),
        (false, false) => Deflation::None,
    };
    let (s, m) = match mode {
        Deflation::Ground => {
            let keep: Vec<usize> = (1..n).collect();
            (s.select(&keep, &keep), m.select(&keep, &keep))
        }
        _ => (s, m),
    };
    if s.nrows <= dense_limit {
        return min_eig_dense(&dense(&s), &dense(&m), mode == Deflation::Complement);
    }
    SparseCholesky::new(&m).map_err(|_| Error::Eigen("M is not positive definite".into()))?;
    match mode {
        Deflation::Complement => {
            let keep: Vec<usize> = (1..n).collect();
            let chol = SparseCholesky::new(&s.select(&keep, &keep))?;
            let solve = |r: &[f64]| {
                let y = chol.solve(&r[1..]);
                let mut x = vec![0.0];
                x.extend(y);
                x
            };
            lanczos_min(&solve, &m, true, tol)
        }
        _ => {
            let chol = SparseCholesky::new(&s).map_err(|_| Error::Eigen("S is singular after deflation".into()))?;
            lanczos_min(&|r: &[f64]| chol.solve(r), &m, false, tol)
        }
    }
}

/// max over the admissible space of q^T S q / q^T M q, with the same
/// deflation rules as `min_generalized_eig`.
pub fn max_generalized_eig(s: &SparseMatrix, m: &SparseMatrix, tol: f64) -> Result<f64> {
    max_generalized_eig_with(s, m, tol, DENSE_LIMIT)
}

pub fn max_generalized_eig_with(s: &SparseMatrix, m: &SparseMatrix, tol: f64, dense_limit: usize) -> Result<f64> {
    let s = symmetrized(s, "S")?;
    let m = symmetrized(m, "M")?;
    if s.nrows != m.nrows {
        return Err(Error::Eigen("S and M differ in size".into()));
    }
    let n = s.nrows;
    let (s, m) = if kills_constants(&m) {
        if !kills_constants(&s) {
            return Err(Error::Eigen("M is singular on constants but S is not".into()));
        }
        let keep: Vec<usize> = (1..n).collect();
        (s.select(&keep, &keep), m.select(&keep, &keep))
    } else {
        (s, m)
    };
    if s.nrows <= dense_limit {
        // max of (S, M) = -min of (-S, M); constants of S need no deflation here.
        return Ok(-min_eig_dense(&dense(&s.scaled(-1.0)), &dense(&m), false)?);
    }
    let chol = SparseCholesky::new(&m).map_err(|_| Error::Eigen("M is not positive definite".into()))?;
    lanczos_top(&|x: &[f64]| chol.solve(&s.mul_vec(x)), &m, false, tol)
}

fn dense(a: &SparseMatrix) -> Mat<f64> {
    let mut d = Mat::<f64>::zeros(a.nrows, a.ncols);
    for (r, c, v) in a.triplets() {
        d[(r, c)] += v;
    }
    d
}

/// Dense pencil: whiten with M^{-1/2}, then a symmetric eigensolve. With
/// `complement`, the zero mode M^{1/2} 1 is shifted out of the way.
fn min_eig_dense(s: &Mat<f64>, m: &Mat<f64>, complement: bool) -> Result<f64> {
    let n = s.nrows();
    if n == 0 {
        return Err(Error::Eigen("empty pencil".into()));
    }
    let em = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let lam: Vec<f64> = (0..n).map(|k| em.S()[k]).collect();
    let top = lam.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if lam.iter().any(|&x| !(x > 1e-14 * top)) {
        return Err(Error::Eigen("M is not positive definite".into()));
    }
    let u = em.U();
    let scaled = Mat::<f64>::from_fn(n, n, |i, k| u[(i, k)] / lam[k].sqrt());
    let w = &scaled * u.transpose();
    let mut g = &w * s * &w;
    if complement {
        // y = M^{1/2} 1 spans the zero mode of g.
        let ut_one: Vec<f64> = (0..n).map(|k| (0..n).map(|j| u[(j, k)]).sum::<f64>() * lam[k].sqrt()).collect();
        let msqrt_one: Vec<f64> = (0..n).map(|i| (0..n).map(|k| u[(i, k)] * ut_one[k]).sum()).collect();
        let ny = dot(&msqrt_one, &msqrt_one);
        let frob = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[(i, j)] * g[(i, j)]).sum::<f64>().sqrt();
        let sigma = 1.0 + 2.0 * frob;
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += sigma * msqrt_one[i] * msqrt_one[j] / ny;
            }
        }
    }
    let ev = g.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(ev[0])
}

/// Shift-invert: the smallest eigenvalue of (S, M) is the inverse of the
/// largest of S^-1 M.
fn lanczos_min(solve: &dyn Fn(&[f64]) -> Vec<f64>, m: &SparseMatrix, complement: bool, tol: f64) -> Result<f64> {
    Ok(1.0 / lanczos_top(&|x: &[f64]| solve(&m.mul_vec(x)), m, complement, tol)?)
}

/// Largest eigenvalue of P T, with T self-adjoint in the M inner product,
/// by Lanczos with full reorthogonalization. With `complement`, P removes
/// the M-projection on constants.
fn lanczos_top(apply: &dyn Fn(&[f64]) -> Vec<f64>, m: &SparseMatrix, complement: bool, tol: f64) -> Result<f64> {
    let n = m.nrows;
    let ones = vec![1.0; n];
    let m_ones = m.mul_vec(&ones);
    let one_m_one = dot(&ones, &m_ones);
    let project = |x: &mut Vec<f64>| {
        if complement {
            let c = dot(x, &m_ones) / one_m_one;
            x.iter_mut().for_each(|v| *v -= c);
        }
    };
    let mnorm = |x: &[f64]| dot(x, &m.mul_vec(x)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    project(&mut v);
    let nv = mnorm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let max_steps = n.min(400);
    let mut mbasis: Vec<Vec<f64>> = vec![m.mul_vec(&v)];
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    for j in 0..max_steps {
        let mut w = apply(&basis[j]);
        project(&mut w);
        alpha.push(dot(&w, &mbasis[j]));
        // Full reorthogonalization also removes the three-term recurrence.
        for _pass in 0..2 {
            for (q, mq) in basis.iter().zip(&mbasis) {
                let c = dot(&w, mq);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let b = mnorm(&w);

        let k = alpha.len();
        let t = Mat::<f64>::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let e = t.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let theta = e.S()[k - 1];
        let resid = (b * e.U()[(k - 1, k - 1)]).abs();
        if !(theta > 0.0) {
            return Err(Error::Eigen("operator is not positive".into()));
        }
        if resid <= tol * theta || b <= 1e-14 * theta {
            return Ok(theta);
        }
        last = resid / theta;
        beta.push(b);
        let next: Vec<f64> = w.iter().map(|x| x / b).collect();
        mbasis.push(m.mul_vec(&next));
        basis.push(next);
    }
    Err(Error::Eigen(format!("Lanczos stagnated after {max_steps} steps (relative residual {last:e})")))
}

/// Coercivity quotient R_*(s_B) = min q^T C q / q^T Q q over non-constant q.
pub fn coercivity_value(mesh: &BoxMesh, nu: f64, tol: f64) -> Result<f64> {
    let sys = stokes_operators(mesh, nu)?;
    min_generalized_eig(&sys.c, &star_norm_matrix(mesh)?, tol)
}

/// Generalized inf-sup quotient R_*(S_box + C) against V over V-mean-zero
/// pressures, with S_box = -B A^-1 Bt on the Dirichlet-eliminated velocity.
pub fn infsup_value(mesh: &BoxMesh, nu: f64, tol: f64) -> Result<f64> {
    let sys = stokes_operators(mesh, nu)?;
    let v = mass_matrix(mesh);
    if sys.n <= DENSE_LIMIT {
        let s = dense_schur(&sys)?;
        let mut vd = Mat::<f64>::zeros(sys.n, sys.n);
        for (k, vol) in sys.volumes.iter().enumerate() {
            vd[(k, k)] = *vol;
        }
        return min_eig_dense(&s, &vd, true);
    }
    let saddle = GroundedSaddle::new(&sys)?;
    let nu_ = sys.n_u();
    let solve = |r: &[f64]| {
        let mut rhs = vec![0.0; nu_];
        rhs.extend_from_slice(r);
        saddle.solve(&rhs)[nu_..].to_vec()
    };
    lanczos_min(&solve, &v, true, tol)
}

fn zero(_: &Point) -> Point {
    [0.0; 3]
}

/// Assembled system with homogeneous Dirichlet velocity.
fn stokes_operators(mesh: &BoxMesh, nu: f64) -> Result<SaddleSystem> {
    if !(nu > 0.0) {
        return Err(Error::Config(format!("viscosity {nu} must be positive")));
    }
    Ok(apply_dirichlet(&assemble_system(mesh, nu, &zero)?, mesh, &zero))
}

/// Dense C + Bt^T A^-1 Bt from one Cholesky solve per pressure unknown.
fn dense_schur(sys: &SaddleSystem) -> Result<Mat<f64>> {
    let n = sys.n;
    let chol = SparseCholesky::new(&sys.a)?;
    let btt = sys.bt.transpose();
    let mut s = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let col = btt.mul_vec(&chol.solve(&sys.bt.mul_vec(&e)));
        e[k] = 0.0;
        for (r, x) in col.into_iter().enumerate() {
            s[(r, k)] = x;
        }
    }
    for (r, c, v) in sys.c.triplets() {
        s[(r, c)] += v;
    }
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    Ok(sym)
}

/// Structured meshes of [-1, 1]^2 with h = h0 / 2^k.
pub fn family_2d(h0: f64, levels: usize) -> Result<Vec<(f64, BoxMesh)>> {
    (0..levels)
        .map(|k| {
            let h = h0 / 2f64.powi(k as i32);
            Ok((h, build_dual(&triangulate_square(Rect::square(-1.0, 1.0), h, 0.0, 0)?)?))
        })
        .collect()
}

/// Attach refinement rates to (h, value) pairs.
pub fn study_rows(values: &[(f64, f64)]) -> Vec<EigStudyRow> {
    values
        .iter()
        .enumerate()
        .map(|(k, &(h, value))| EigStudyRow {
            h,
            value,
            rate: (k > 0).then(|| {
                let (hp, vp) = values[k - 1];
                (vp / value).ln() / (hp / h).ln()
            }),
        })
        .collect()
}

pub fn coercivity_study(family: &[(f64, BoxMesh)], nu: f64, tol: f64) -> Result<Vec<EigStudyRow>> {
    let values = family.iter().map(|(h, m)| Ok((*h, coercivity_value(m, nu, tol)?))).collect::<Result<Vec<_>>>()?;
    Ok(study_rows(&values))
}

pub fn infsup_study(family: &[(f64, BoxMesh)], nu: f64, tol: f64) -> Result<Vec<EigStudyRow>> {
    let values = family.iter().map(|(h, m)| Ok((*h, infsup_value(m, nu, tol)?))).collect::<Result<Vec<_>>>()?;
    Ok(study_rows(&values))
}

/// Least-squares slope of log(value) against log(h).
pub fn fitted_slope(rows: &[EigStudyRow]) -> f64 {
    fit_rate(&rows.iter().map(|r| (r.h, r.value)).collect::<Vec<_>>())
}

/// CSV with header h,value,rate (rate empty on the first row).
pub fn rows_csv(rows: &[EigStudyRow]) -> String {
    let mut out = String::from("h,value,rate\n");
    for r in rows {
        let rate = r.rate.map(|x| format!("{x:.3}")).unwrap_or_default();
        out.push_str(&format!("{},{:e},{}\n", r.h, r.value, rate));
    }
    out
}
