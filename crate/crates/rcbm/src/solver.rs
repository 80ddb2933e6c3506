//! Monolithic and SIMPLE solvers for the stabilized saddle-point system.

use serde::{Deserialize, Serialize};

use crate::assembly::{SaddleSystem, SparseMatrix};
use crate::fields::NodalField;
use crate::linalg::{norm2, pcg, SparseCholesky, SparseLu};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct StokesSolution {
    /// One nodal field per velocity component.
    pub u: Vec<NodalField>,
    pub p: NodalField,
    /// Residual history (one entry for direct solves).
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl StokesSolution {
    /// Velocity stacked component-major, matching the DOF map.
    pub fn velocity(&self) -> Vec<f64> {
        self.u.iter().flat_map(|c| c.values.iter().copied()).collect()
    }

    fn from_parts(dim: usize, n: usize, u: &[f64], p: Vec<f64>, residuals: Vec<f64>, iterations: usize) -> Self {
        StokesSolution {
            u: (0..dim).map(|l| NodalField::new(u[l * n..(l + 1) * n].to_vec())).collect(),
            p: NodalField::new(p),
            residuals,
            iterations,
        }
    }
}

/// Shift `p` so that sum |B_i| p_i = 0.
pub fn fix_pressure_mean(p: &NodalField, volumes: &[f64]) -> NodalField {
    let total: f64 = volumes.iter().sum();
    let mean = p.values.iter().zip(volumes).map(|(x, v)| x * v).sum::<f64>() / total;
    NodalField::new(p.values.iter().map(|x| x - mean).collect())
}

/// Index of the pressure DOF used to ground the constant mode.
fn ground_node(sys: &SaddleSystem) -> usize {
    (0..sys.n).max_by(|&a, &b| sys.volumes[a].total_cmp(&sys.volumes[b])).unwrap_or(0)
}

fn without(n: usize, skip: usize) -> Vec<usize> {
    (0..n).filter(|&k| k != skip).collect()
}

/// Factorization of the block matrix with one pressure DOF grounded.
/// Solves K x = b for right-hand sides whose pressure part sums to zero.
pub struct GroundedSaddle {
    n_total: usize,
    ground: usize,
    lu: SparseLu,
}

impl GroundedSaddle {
    pub fn new(sys: &SaddleSystem) -> Result<Self> {
        let k = sys.block_matrix();
        let ground = sys.n_u() + ground_node(sys);
        let keep = without(k.nrows, ground);
        let lu = SparseLu::new(&k.select(&keep, &keep))?;
        Ok(GroundedSaddle { n_total: k.nrows, ground, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rb: Vec<f64> = (0..self.n_total).filter(|&k| k != self.ground).map(|k| b[k]).collect();
        let y = self.lu.solve(&rb);
        let mut x = Vec::with_capacity(self.n_total);
        x.extend_from_slice(&y[..self.ground]);
        x.push(0.0);
        x.extend_from_slice(&y[self.ground..]);
        x
    }
}

/// Sparse direct solve of [[A, Bt], [B, C]] with the pressure mean fixed
/// afterwards. Fails if the relative residual exceeds `tol`.
pub fn solve_monolithic_tol(sys: &SaddleSystem, tol: f64) -> Result<StokesSolution> {
    let nu_ = sys.n_u();
    let solver = GroundedSaddle::new(sys)?;
    let x = solver.solve(&sys.rhs());
    let p = fix_pressure_mean(&NodalField::new(x[nu_..].to_vec()), &sys.volumes);
    let res = sys.residual(&x[..nu_], &p.values);
    if !(res <= tol) {
        return Err(Error::Solver { msg: format!("direct solve residual {res:e} above {tol:e}"), iterations: 1, history: vec![res] });
    }
    Ok(StokesSolution::from_parts(sys.dim, sys.n, &x[..nu_], p.values, vec![res], 1))
}

pub fn solve_monolithic(sys: &SaddleSystem) -> Result<StokesSolution> {
    solve_monolithic_tol(sys, 1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
    /// Sparse Cholesky, factored once.
    Direct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimpleConfig {
    pub alpha_u: f64,
    pub alpha_p: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub inner: InnerSolver,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Iterations over which a residual growth of 1e3 counts as divergence.
    pub divergence_window: usize,
}

impl Default for SimpleConfig {
    fn default() -> Self {
        SimpleConfig {
            alpha_u: 0.7,
            alpha_p: 0.3,
            tol: 1e-8,
            max_iter: 5000,
            inner: InnerSolver::Cg,
            inner_tol: 1e-13,
            inner_max_iter: 10000,
            divergence_window: 50,
        }
    }
}

impl SimpleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_u", self.alpha_u), ("alpha_p", self.alpha_p)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("{name} = {a} outside (0, 1]")));
            }
        }
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

struct Momentum<'a> {
    matrix: SparseMatrix,
    chol: Option<SparseCholesky>,
    cfg: &'a SimpleConfig,
}

impl Momentum<'_> {
    fn solve(&self, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        match &self.chol {
            Some(c) => Ok(c.solve(rhs)),
            None => Ok(pcg(&self.matrix, rhs, Some(guess), self.cfg.inner_tol, self.cfg.inner_max_iter)?.x),
        }
    }
}

pub fn simple_iterate(sys: &SaddleSystem, cfg: &SimpleConfig) -> Result<StokesSolution> {
    simple_iterate_from(sys, cfg, None)
}

/// SIMPLE splitting:
/// 1. relaxed momentum predictor A' u* = F - Bt p + (1 - a_u)/a_u D u,
///    with A' = A + (1 - a_u)/a_u D;
/// 2. u~ = D'^-1 (H' u* + F'), D' = D / a_u, H' = D' - A';
/// 3. pressure equation (C - B D'^-1 Bt) p* = H - B u~;
/// 4. p <- p + a_p (p* - p), u <- u~ - D'^-1 Bt p.
///
/// Its fixed point solves the monolithic system exactly.
pub fn simple_iterate_from(sys: &SaddleSystem, cfg: &SimpleConfig, init: Option<&StokesSolution>) -> Result<StokesSolution> {
    cfg.validate()?;
    let n = sys.n;
    let nu_ = sys.n_u();
    let diag = sys.a.diag();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Assembly("momentum diagonal must be positive".into()));
    }
    let relax = (1.0 - cfg.alpha_u) / cfg.alpha_u;
    let a_rel = sys.a.add_scaled(&SparseMatrix::diagonal(&diag), relax);
    let d_rel: Vec<f64> = diag.iter().map(|d| d / cfg.alpha_u).collect();
    let inv_d_rel: Vec<f64> = d_rel.iter().map(|d| 1.0 / d).collect();
    let chol = match cfg.inner {
        InnerSolver::Direct => Some(SparseCholesky::new(&a_rel)?),
        InnerSolver::Cg => None,
    };
    let momentum = Momentum { matrix: a_rel.clone(), chol, cfg };

    let wide = sys.b.matmul(&sys.bt.scale_rows(&inv_d_rel));
    let pmat = sys.c.add_scaled(&wide, -1.0);
    let pmat = pmat.add_scaled(&pmat.transpose(), 1.0).scaled(0.5);
    let g = ground_node(sys);
    let keep = without(n, g);
    let pchol = SparseCholesky::new(&pmat.select(&keep, &keep))?;
    let solve_p = |rhs: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = keep.iter().map(|&k| rhs[k]).collect();
        let y = pchol.solve(&r);
        let mut x = vec![0.0; n];
        for (k, &i) in keep.iter().enumerate() {
            x[i] = y[k];
        }
        x
    };

    let (mut u, mut p) = match init {
        Some(s) => (s.velocity(), s.p.values.clone()),
        None => {
            let mut u = vec![0.0; nu_];
            for r in 0..nu_ {
                if sys.dirichlet[r] {
                    u[r] = sys.f[r];
                }
            }
            (u, vec![0.0; n])
        }
    };

    let fnorm = norm2(&sys.f).max(f64::MIN_POSITIVE);
    let mut cont_ref: Option<f64> = None;
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        // 1. momentum predictor
        let btp = sys.bt.mul_vec(&p);
        let rhs: Vec<f64> = (0..nu_).map(|r| sys.f[r] - btp[r] + relax * diag[r] * u[r]).collect();
        let ustar = momentum.solve(&rhs, &u)?;
        // 2. u~ = D'^-1 (F' - (A' - D') u*) with F' = F + relax D u
        let offd = a_rel.mul_vec(&ustar);
        let utilde: Vec<f64> = (0..nu_)
            .map(|r| (sys.f[r] + relax * diag[r] * u[r] - (offd[r] - d_rel[r] * ustar[r])) * inv_d_rel[r])
            .collect();
        // 3. pressure equation
        let bu = sys.b.mul_vec(&utilde);
        let src: Vec<f64> = (0..n).map(|k| sys.h[k] - bu[k]).collect();
        if cont_ref.is_none() {
            cont_ref = Some(norm2(&src).max(norm2(&sys.h)).max(f64::MIN_POSITIVE));
        }
        let pstar = fix_pressure_mean(&NodalField::new(solve_p(&src)), &sys.volumes).values;
        // 4. relax pressure, correct velocity
        for k in 0..n {
            p[k] += cfg.alpha_p * (pstar[k] - p[k]);
        }
        let btp = sys.bt.mul_vec(&p);
        for r in 0..nu_ {
            u[r] = utilde[r] - inv_d_rel[r] * btp[r];
        }

        let au = sys.a.mul_vec(&u);
        let rm: Vec<f64> = (0..nu_).map(|r| sys.f[r] - au[r] - btp[r]).collect();
        let bu = sys.b.mul_vec(&u);
        let cp = sys.c.mul_vec(&p);
        let rc: Vec<f64> = (0..n).map(|k| sys.h[k] - bu[k] - cp[k]).collect();
        let res = (norm2(&rm) / fnorm).max(norm2(&rc) / cont_ref.unwrap());
        history.push(res);
        if !res.is_finite() {
            return Err(Error::Solver { msg: "non-finite residual".into(), iterations: it, history });
        }
        if res <= cfg.tol {
            let p = fix_pressure_mean(&NodalField::new(p), &sys.volumes);
            return Ok(StokesSolution::from_parts(sys.dim, n, &u, p.values, history, it));
        }
        if history.len() > cfg.divergence_window {
            let window = &history[history.len() - cfg.divergence_window..];
            let best = history.iter().copied().fold(f64::INFINITY, f64::min);
            if window.iter().all(|&r| r > 1e3 * best) {
                return Err(Error::Solver { msg: "SIMPLE diverged".into(), iterations: it, history });
            }
        }
    }
    Err(Error::Solver { msg: format!("SIMPLE did not reach {:e}", cfg.tol), iterations: cfg.max_iter, history })
}
