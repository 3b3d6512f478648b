//! Small dense linear-algebra helpers shared by the estimators.

use faer::linalg::solvers::{DenseSolveCore, Llt, PartialPivLu, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative size of the diagonal jitter added when a Cholesky factorization fails.
pub const JITTER_SCALE: f64 = 1e-10;

/// Cholesky factor of a symmetric positive-definite matrix, possibly after a diagonal jitter.
pub struct SpdFactor {
    llt: Llt<f64>,
    jitter: f64,
}

impl SpdFactor {
    /// Factorizes `a`; on failure retries once with `1e-10 * trace / n` added to the diagonal.
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Shape(format!("expected a square matrix, got {}x{}", n, a.ncols())));
        }
        if n == 0 {
            return Err(Error::Shape("cannot factorize an empty matrix".into()));
        }
        for j in 0..n {
            for i in 0..n {
                if !a[(i, j)].is_finite() {
                    return Err(Error::Numeric(format!("non-finite matrix entry at ({i}, {j})")));
                }
            }
        }
        if let Ok(llt) = Llt::new(a, Side::Lower) {
            return Ok(Self { llt, jitter: 0.0 });
        }
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let jitter = if trace > 0.0 { JITTER_SCALE * trace / n as f64 } else { JITTER_SCALE };
        let mut shifted = a.to_owned();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        match Llt::new(shifted.as_ref(), Side::Lower) {
            Ok(llt) => Ok(Self { llt, jitter }),
            Err(_) => Err(Error::Numeric(format!(
                "Cholesky factorization failed even with diagonal jitter {jitter:.3e}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// Diagonal jitter that was needed (0 when the plain factorization succeeded).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.llt.solve(b.as_ref());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Explicit inverse, symmetrized.
    pub fn inverse(&self) -> Mat<f64> {
        let inv = self.llt.inverse();
        let n = inv.nrows();
        Mat::from_fn(n, n, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]))
    }
}

/// Solves a general square system with partial-pivoting LU, rejecting non-finite results.
pub fn lu_solve(a: MatRef<'_, f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n != a.ncols() || n != rhs.len() {
        return Err(Error::Shape(format!(
            "system {}x{} with right-hand side of length {}",
            n,
            a.ncols(),
            rhs.len()
        )));
    }
    let lu = PartialPivLu::new(a);
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(b.as_ref());
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Singular("linear system is singular".into()))
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigenvalue computation failed: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues (ascending) and matching unit eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let values = order.iter().map(|&i| s[i]).collect();
    let vectors = Mat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    Ok((values, vectors))
}

/// Pairwise (cascade) summation; result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 16;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `m * v` for a dense matrix and a slice.
pub fn mat_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// `vᵀ m v`.
pub fn quad_form(m: MatRef<'_, f64>, v: &[f64]) -> f64 {
    dot(v, &mat_vec(m, v))
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn max_abs_asymmetry(m: MatRef<'_, f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
