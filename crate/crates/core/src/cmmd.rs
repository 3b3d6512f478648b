//! Conditional MMD between a weighted mixture of source embeddings and the target embedding.
//!
//! At a covariate point `x` the estimated discrepancy is the quadratic
//! `d̂(x, w) = wᵀ Â w − 2 wᵀ b̂ + ĉ`, where the entries are inner products of the fitted
//! embeddings: `Â_ij = α_iᵀ L_ij α_j`, `b̂_i = α_iᵀ L_i0 α_0` and `ĉ = α_0ᵀ L_00 α_0`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::kernel::{check_shared_outcome_bandwidth, cross_outcome_gram, CmeModel, OutcomeGramCache};
use crate::linalg::{dot, mat_vec, quad_form, symmetric_eigenvalues, trace};
use crate::points::Points;
use crate::qp::solve_simplex_qp;

/// Values down to this are rounding noise around zero and are reported as 0.
pub const CMMD_NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Relative ridge used when the caller does not choose one.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CmmdComponents {
    pub a_hat: Mat<f64>,
    pub b_hat: Vec<f64>,
    pub c_hat: f64,
    pub x: Vec<f64>,
}

impl CmmdComponents {
    pub fn n_sources(&self) -> usize {
        self.b_hat.len()
    }
}

fn check_models(sources: &[CmeModel], target: &CmeModel) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::Input("at least one source population is required".into()));
    }
    for s in sources {
        check_shared_outcome_bandwidth(s, target)?;
        if s.dim() != target.dim() {
            return Err(Error::Shape(format!(
                "population {} has covariate dimension {} but the target has {}",
                s.population_id,
                s.dim(),
                target.dim()
            )));
        }
    }
    Ok(())
}

/// Components of the CMMD quadratic at a single point, using cached outcome Grams.
pub fn cmmd_components(
    sources: &[CmeModel],
    target: &CmeModel,
    x: &[f64],
    cache: &OutcomeGramCache,
) -> Result<CmmdComponents> {
    check_models(sources, target)?;
    let models: Vec<&CmeModel> = std::iter::once(target).chain(sources).collect();
    let alphas = models
        .iter()
        .map(|m| m.embedding_coefficients(x))
        .collect::<Result<Vec<_>>>()?;
    let inner = |p: usize, q: usize| -> Result<f64> {
        let l = cache.get(models[p], models[q])?;
        Ok(dot(&alphas[p], &mat_vec(l.as_ref().as_ref(), &alphas[q])))
    };
    let n = sources.len();
    let mut a_hat = Mat::zeros(n, n);
    let mut b_hat = vec![0.0; n];
    for i in 0..n {
        for j in i..n {
            let v = inner(i + 1, j + 1)?;
            a_hat[(i, j)] = v;
            a_hat[(j, i)] = v;
        }
        b_hat[i] = inner(i + 1, 0)?;
    }
    Ok(CmmdComponents { a_hat, b_hat, c_hat: inner(0, 0)?, x: x.to_vec() })
}

/// Components at many points at once; each outcome Gram is formed once and applied to all
/// points with a matrix product, then dropped.
pub fn cmmd_components_batch(sources: &[CmeModel], target: &CmeModel, points: &Points) -> Result<Vec<CmmdComponents>> {
    check_models(sources, target)?;
    if points.dim() != target.dim() {
        return Err(Error::Shape("evaluation points do not match the covariate dimension".into()));
    }
    let models: Vec<&CmeModel> = std::iter::once(target).chain(sources).collect();
    let count = points.len();
    let alphas = models
        .iter()
        .map(|m| m.embedding_matrix(points))
        .collect::<Result<Vec<_>>>()?;
    let np = models.len();
    // inner[p][q] for p <= q, one value per evaluation point
    let mut inner = vec![vec![Vec::new(); np]; np];
    for p in 0..np {
        for q in p..np {
            let l = cross_outcome_gram(models[p], models[q])?;
            let mut t = Mat::zeros(l.nrows(), count);
            crate::kernel::matmul_into(&mut t, l.as_ref(), alphas[q].as_ref(), faer::get_global_parallelism());
            let ap = &alphas[p];
            inner[p][q] = (0..count)
                .map(|x| (0..ap.nrows()).map(|u| ap[(u, x)] * t[(u, x)]).sum())
                .collect();
        }
    }
    let n = sources.len();
    Ok((0..count)
        .map(|x| {
            let a_hat = Mat::from_fn(n, n, |i, j| {
                let (p, q) = if i <= j { (i + 1, j + 1) } else { (j + 1, i + 1) };
                inner[p][q][x]
            });
            CmmdComponents {
                a_hat,
                b_hat: (0..n).map(|i| inner[0][i + 1][x]).collect(),
                c_hat: inner[0][0][x],
                x: points.row(x).to_vec(),
            }
        })
        .collect())
}

fn check_len(comp: &CmmdComponents, w: &[f64]) -> Result<()> {
    if w.len() != comp.n_sources() {
        return Err(Error::Shape(format!(
            "weight vector of length {} for {} sources",
            w.len(),
            comp.n_sources()
        )));
    }
    Ok(())
}

/// `wᵀÂw − 2wᵀb̂ + ĉ`.
pub fn cmmd_value(comp: &CmmdComponents, w: &[f64]) -> Result<f64> {
    check_len(comp, w)?;
    Ok(quad_form(comp.a_hat.as_ref(), w) - 2.0 * dot(w, &comp.b_hat) + comp.c_hat)
}

/// `2Âw − 2b̂`.
pub fn cmmd_gradient(comp: &CmmdComponents, w: &[f64]) -> Result<Vec<f64>> {
    check_len(comp, w)?;
    Ok(mat_vec(comp.a_hat.as_ref(), w)
        .iter()
        .zip(&comp.b_hat)
        .map(|(aw, b)| 2.0 * (aw - b))
        .collect())
}

/// Maps rounding noise below zero to 0 and rejects genuinely negative values.
pub fn clamp_cmmd(value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -CMMD_NEGATIVE_TOLERANCE {
        Ok(0.0)
    } else {
        Err(Error::Numeric(format!("estimated CMMD {value:.3e} is negative beyond rounding")))
    }
}

/// `1e-8 · trace(Â) / N`, floored at the smallest positive double.
pub fn default_ridge(comp: &CmmdComponents) -> f64 {
    (DEFAULT_RELATIVE_RIDGE * trace(comp.a_hat.as_ref()) / comp.n_sources() as f64).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct PointwiseWeights {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub constrained: bool,
    pub cmmd_value: f64,
}

/// Minimizes `d̂(x, ·)` at one point, over the simplex or over all of `R^N`.
pub fn pointwise_weights(comp: &CmmdComponents, constrained: bool, ridge: f64) -> Result<PointwiseWeights> {
    let n = comp.n_sources();
    if n == 0 {
        return Err(Error::Input("no source populations".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Domain(format!("ridge must be a nonnegative finite number, got {ridge}")));
    }
    let mut q = comp.a_hat.clone();
    for i in 0..n {
        q[(i, i)] += ridge;
    }
    let w = if constrained {
        if n == 1 {
            vec![1.0]
        } else {
            solve_simplex_qp(&q, &comp.b_hat)?
        }
    } else {
        if ridge == 0.0 {
            let ev = symmetric_eigenvalues(q.as_ref())?;
            let max = ev[n - 1];
            if max <= 0.0 || ev[0] <= 1e-12 * max {
                return Err(Error::Singular(
                    "Â(x) is singular; pass a positive ridge for unconstrained weights".into(),
                ));
            }
        }
        crate::linalg::lu_solve(q.as_ref(), &comp.b_hat)?
    };
    let value = clamp_cmmd(cmmd_value(comp, &w)?)?;
    Ok(PointwiseWeights { x: comp.x.clone(), w, constrained, cmmd_value: value })
}
