//! Linear solvers: sparse direct factorizations and preconditioned CG.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::assembly::sparse::SparseMatrix;
use crate::{Error, Result};

fn to_mat(b: &[f64]) -> Mat<f64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

fn from_mat(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// Sparse Cholesky factorization of an SPD matrix.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let llt = a
            .to_faer()?
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::LinearSolver(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(SparseCholesky { n: a.nrows, llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut m = to_mat(b);
        self.llt.solve_in_place(&mut m);
        from_mat(&m)
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::LinearSolver(format!("LU factorization failed: {e:?}")))?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut m = to_mat(b);
        self.lu.solve_in_place(&mut m);
        from_mat(&m)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct IterativeResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients with Jacobi preconditioning for SPD `a`.
pub fn pcg(a: &SparseMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<IterativeResult> {
    let n = b.len();
    let diag = a.diag();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::LinearSolver("CG needs a positive diagonal".into()));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut res = norm2(&r) / bnorm;
    if res <= tol {
        return Ok(IterativeResult { x, iterations: 0, relative_residual: res });
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolver("CG breakdown: matrix not positive definite".into()));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = norm2(&r) / bnorm;
        if res <= tol {
            return Ok(IterativeResult { x, iterations: it, relative_residual: res });
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::LinearSolver(format!("CG did not converge in {max_iter} iterations (residual {res:e})")))
}
