//! B-spline sieve bases, sieve weight fits and sieve outcome regressions.

use faer::Mat;

use crate::cmmd::CmmdComponents;
use crate::error::{Error, Result};
use crate::linalg::{dot, trace, SpdFactor};
use crate::points::Points;
use crate::qp::{solve_general_qp, QpProblem};

/// Fraction of the data range added on each side of a basis domain.
pub const DOMAIN_EXPANSION: f64 = 0.01;

/// Clamped (open-uniform end) B-spline basis of a given order on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    order: usize,
    interior_knots: Vec<f64>,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// `order` is the polynomial order (degree + 1); order 1 is piecewise constant.
    pub fn new(order: usize, interior_knots: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("B-spline order must be at least 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("invalid basis domain [{lo}, {hi}]")));
        }
        let mut prev = lo;
        for &k in &interior_knots {
            if !(k > prev && k < hi) {
                return Err(Error::Domain(format!(
                    "interior knots must be strictly increasing inside ({lo}, {hi}); got {interior_knots:?}"
                )));
            }
            prev = k;
        }
        let mut knots = vec![lo; order];
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat(hi).take(order));
        Ok(Self { order, interior_knots, lo, hi, knots })
    }

    /// Knots at equally spaced quantiles of `sample`; domain is the sample range widened by
    /// [`DOMAIN_EXPANSION`] on each side.
    pub fn from_sample(order: usize, n_interior_knots: usize, sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Input("cannot place knots without data".into()));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite covariate value".into()));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        if max <= min {
            return Err(Error::DegenerateData("covariate sample has no spread".into()));
        }
        let pad = DOMAIN_EXPANSION * (max - min);
        let knots = (1..=n_interior_knots)
            .map(|j| quantile_sorted(&sorted, j as f64 / (n_interior_knots + 1) as f64))
            .collect::<Vec<_>>();
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateData(format!(
                "covariate quantiles are tied; cannot place {n_interior_knots} distinct knots"
            )));
        }
        Self::new(order, knots, min - pad, max + pad)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn dim(&self) -> usize {
        self.interior_knots.len() + self.order
    }

    /// Basis values at `x`, clamped into the domain.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.eval_flagged(x).0
    }

    /// Basis values and whether `x` had to be clamped into the domain.
    pub fn eval_flagged(&self, x: f64) -> (Vec<f64>, bool) {
        let clamped = x < self.lo || x > self.hi;
        let x = x.clamp(self.lo, self.hi);
        let p = self.order - 1;
        let span = self.find_span(x);
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; self.dim()];
        out[span - p..=span].copy_from_slice(&n);
        (out, clamped)
    }

    /// Index `i` of the knot interval `[t_i, t_{i+1})` holding `x`; the right end belongs to the
    /// last nonempty interval.
    fn find_span(&self, x: f64) -> usize {
        let p = self.order - 1;
        let last = self.dim() - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        let (mut lo, mut hi) = (p, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// `V(x)`: block-diagonal `(Σ s_i) × N` design with column `i` holding `P_i(x)`.
pub fn build_block_design(bases: &[BSplineBasis], x: f64) -> Mat<f64> {
    let total: usize = bases.iter().map(BSplineBasis::dim).sum();
    let mut v = Mat::zeros(total, bases.len());
    let mut offset = 0;
    for (i, b) in bases.iter().enumerate() {
        for (k, p) in b.eval(x).into_iter().enumerate() {
            v[(offset + k, i)] = p;
        }
        offset += b.dim();
    }
    v
}

/// How the sieve weight fit keeps the weights on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SieveConstraint {
    /// No constraint: unconstrained minimizer of the average CMMD.
    None,
    /// Coefficients sum to one across populations at every basis index and are nonnegative.
    /// Requires identical bases.
    #[default]
    Coefficients,
    /// Weights sum to one and are nonnegative at the observed target points only.
    TargetPoints,
}

impl std::str::FromStr for SieveConstraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "unconstrained" => Ok(Self::None),
            "coefficients" => Ok(Self::Coefficients),
            "target-points" | "target_points" => Ok(Self::TargetPoints),
            other => Err(Error::Config(format!(
                "unknown sieve constraint '{other}' (expected none, coefficients or target-points)"
            ))),
        }
    }
}

impl std::fmt::Display for SieveConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Coefficients => "coefficients",
            Self::TargetPoints => "target-points",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SieveWeightModel {
    pub bases: Vec<BSplineBasis>,
    /// Stacked coefficients `(β_1, …, β_N)`.
    pub beta_w: Vec<f64>,
    pub constraint: SieveConstraint,
    /// Average CMMD at the fitted coefficients.
    pub objective: f64,
    pub ridge: f64,
}

impl SieveWeightModel {
    pub fn n_sources(&self) -> usize {
        self.bases.len()
    }

    /// `ŵ(x) = V(x)ᵀ β_w`.
    pub fn eval_weights(&self, x: f64) -> Vec<f64> {
        let mut offset = 0;
        self.bases
            .iter()
            .map(|b| {
                let p = b.eval(x);
                let w = dot(&p, &self.beta_w[offset..offset + b.dim()]);
                offset += b.dim();
                w
            })
            .collect()
    }
}

/// Average of `V Â Vᵀ` and of `V b̂` over the component points, and the average `ĉ`.
pub fn average_quadratic(comps: &[CmmdComponents], bases: &[BSplineBasis]) -> Result<(Mat<f64>, Vec<f64>, f64)> {
    if comps.is_empty() {
        return Err(Error::Input("the sieve objective needs at least one target point".into()));
    }
    let n = bases.len();
    if comps.iter().any(|c| c.n_sources() != n) {
        return Err(Error::Shape(format!("components do not match the {n} weight bases")));
    }
    let offsets = block_offsets(bases);
    let total = offsets[n];
    let mut h = Mat::<f64>::zeros(total, total);
    let mut lin = vec![0.0; total];
    let mut c_sum = 0.0;
    for comp in comps {
        let x = scalar_point(&comp.x)?;
        let ps: Vec<Vec<f64>> = bases.iter().map(|b| b.eval(x)).collect();
        for i in 0..n {
            for j in 0..n {
                let a = comp.a_hat[(i, j)];
                for (k, pk) in ps[i].iter().enumerate() {
                    if *pk == 0.0 {
                        continue;
                    }
                    for (l, pl) in ps[j].iter().enumerate() {
                        h[(offsets[i] + k, offsets[j] + l)] += pk * a * pl;
                    }
                }
            }
            for (k, pk) in ps[i].iter().enumerate() {
                lin[offsets[i] + k] += pk * comp.b_hat[i];
            }
        }
        c_sum += comp.c_hat;
    }
    let scale = 1.0 / comps.len() as f64;
    for j in 0..total {
        for i in 0..total {
            h[(i, j)] *= scale;
        }
    }
    // exact symmetry for the QP's check
    for j in 0..total {
        for i in 0..j {
            let s = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    lin.iter_mut().for_each(|v| *v *= scale);
    Ok((h, lin, c_sum * scale))
}

pub(crate) fn block_offsets(bases: &[BSplineBasis]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(bases.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for b in bases {
        acc += b.dim();
        offsets.push(acc);
    }
    offsets
}

pub(crate) fn scalar_point(x: &[f64]) -> Result<f64> {
    match x {
        [v] => Ok(*v),
        _ => Err(Error::Config(format!(
            "sieve estimation needs a one-dimensional covariate, got dimension {}; use a pointwise method",
            x.len()
        ))),
    }
}

/// Fits sieve weights by minimizing the average CMMD over the points of `comps`.
///
/// `ridge` is added to the diagonal of the aggregate quadratic; `None` picks
/// `1e-8 · trace / dim`.
pub fn fit_sieve_weights_from_components(
    comps: &[CmmdComponents],
    bases: &[BSplineBasis],
    constraint: SieveConstraint,
    ridge: Option<f64>,
) -> Result<SieveWeightModel> {
    let n = bases.len();
    if n == 0 {
        return Err(Error::Input("no source populations".into()));
    }
    let (mut h, lin, c_avg) = average_quadratic(comps, bases)?;
    let total = lin.len();
    let ridge = match ridge {
        Some(r) if r >= 0.0 && r.is_finite() => r,
        Some(r) => return Err(Error::Domain(format!("ridge must be nonnegative, got {r}"))),
        None => (crate::cmmd::DEFAULT_RELATIVE_RIDGE * trace(h.as_ref()) / total as f64).max(f64::MIN_POSITIVE),
    };
    let unridged = h.clone();
    for i in 0..total {
        h[(i, i)] += ridge;
    }
    let offsets = block_offsets(bases);
    let uniform = vec![1.0 / n as f64; total];
    let problem = match constraint {
        SieveConstraint::None => QpProblem::unconstrained(h, lin.clone()),
        SieveConstraint::Coefficients => {
            let s = bases[0].dim();
            if bases.iter().any(|b| b != &bases[0]) {
                return Err(Error::Config(
                    "coefficient constraints need identical weight bases for every source".into(),
                ));
            }
            let eq = Mat::from_fn(s, total, |k, col| if col % s == k { 1.0 } else { 0.0 });
            QpProblem::unconstrained(h, lin.clone())
                .with_equalities(eq, vec![1.0; s])
                .with_lower_bounds(vec![0.0; total])
                .with_initial(uniform)
        }
        SieveConstraint::TargetPoints => {
            let mut xs = comps.iter().map(|c| scalar_point(&c.x)).collect::<Result<Vec<_>>>()?;
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let eq = Mat::from_fn(xs.len(), total, |r, col| {
                let i = offsets.partition_point(|&o| o <= col) - 1;
                bases[i].eval(xs[r])[col - offsets[i]]
            });
            let g = Mat::from_fn(xs.len() * n, total, |r, col| {
                let (pt, i) = (r / n, r % n);
                if col >= offsets[i] && col < offsets[i + 1] {
                    bases[i].eval(xs[pt])[col - offsets[i]]
                } else {
                    0.0
                }
            });
            let ones = vec![1.0; xs.len()];
            QpProblem::unconstrained(h, lin.clone())
                .with_equalities(eq, ones)
                .with_inequalities(g, vec![0.0; xs.len() * n])
                .with_initial(uniform)
        }
    };
    if constraint == SieveConstraint::None {
        let ev = crate::linalg::symmetric_eigenvalues(problem.q.as_ref())?;
        let top = ev.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        if ev[0] <= 1e-12 * top {
            return Err(Error::Singular(
                "the average CMMD quadratic is rank deficient; set a positive sieve ridge".into(),
            ));
        }
    }
    let beta = if n == 1 && constraint != SieveConstraint::None {
        // the constraints pin w ≡ 1
        match constraint {
            SieveConstraint::Coefficients => vec![1.0; total],
            _ => solve_general_qp(&problem)?.x,
        }
    } else {
        solve_general_qp(&problem)?.x
    };
    let objective = crate::linalg::quad_form(unridged.as_ref(), &beta) - 2.0 * dot(&lin, &beta) + c_avg;
    Ok(SieveWeightModel { bases: bases.to_vec(), beta_w: beta, constraint, objective, ridge })
}

/// Average CMMD `(1/n₀) Σ d̂(x_j, V(x_j)ᵀβ)` for stacked coefficients `beta`.
pub fn average_cmmd(comps: &[CmmdComponents], bases: &[BSplineBasis], beta: &[f64]) -> Result<f64> {
    let (h, lin, c_avg) = average_quadratic(comps, bases)?;
    if beta.len() != lin.len() {
        return Err(Error::Shape("coefficient vector does not match the bases".into()));
    }
    Ok(crate::linalg::quad_form(h.as_ref(), beta) - 2.0 * dot(&lin, beta) + c_avg)
}

/// Fits sieve weights directly from fitted embeddings, evaluating the CMMD at `target_x`.
pub fn fit_sieve_weights(
    sources: &[crate::kernel::CmeModel],
    target: &crate::kernel::CmeModel,
    target_x: &Points,
    bases: &[BSplineBasis],
    constraint: SieveConstraint,
) -> Result<SieveWeightModel> {
    if target_x.is_empty() {
        return Err(Error::Input("no target covariate points".into()));
    }
    if target_x.dim() != 1 {
        scalar_point(target_x.row(0))?;
    }
    let comps = crate::cmmd::cmmd_components_batch(sources, target, target_x)?;
    fit_sieve_weights_from_components(&comps, bases, constraint, None)
}

/// Regression basis: a B-spline in one dimension, or the affine functions `(1, x)` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressionBasis {
    BSpline(BSplineBasis),
    Affine { dim: usize },
}

impl RegressionBasis {
    pub fn dim(&self) -> usize {
        match self {
            Self::BSpline(b) => b.dim(),
            Self::Affine { dim } => dim + 1,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_flagged(x)?.0)
    }

    pub fn eval_flagged(&self, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        match self {
            Self::BSpline(b) => Ok(b.eval_flagged(scalar_point(x)?)),
            Self::Affine { dim } => {
                if x.len() != *dim {
                    return Err(Error::Shape(format!("covariate of dimension {} for an affine basis of dimension {dim}", x.len())));
                }
                let mut q = Vec::with_capacity(dim + 1);
                q.push(1.0);
                q.extend_from_slice(x);
                Ok((q, false))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SieveRegressionModel {
    pub population_id: usize,
    pub basis: RegressionBasis,
    pub beta_g: Vec<f64>,
    pub jitter: f64,
}

impl SieveRegressionModel {
    /// `ĝ(x) = β_gᵀ Q(x)`.
    pub fn eval_regression(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.basis.eval(x)?, &self.beta_g))
    }
}

/// Least squares of `y` on `Q(x)` through the normal equations.
pub fn fit_sieve_regression(
    population_id: usize,
    x: &Points,
    y: &[f64],
    basis: RegressionBasis,
) -> Result<SieveRegressionModel> {
    let m = y.len();
    let t = basis.dim();
    if x.len() != m {
        return Err(Error::Shape(format!("{} covariate rows but {m} outcomes", x.len())));
    }
    if m < t {
        return Err(Error::Input(format!(
            "population {population_id} has {m} treated observations, fewer than the {t} regression basis functions"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite treated outcome in population {population_id}")));
    }
    let mut gram = Mat::<f64>::zeros(t, t);
    let mut rhs = vec![0.0; t];
    for (row, &yj) in x.iter().zip(y) {
        let q = basis.eval(row)?;
        for a in 0..t {
            if q[a] == 0.0 {
                continue;
            }
            for b in 0..t {
                gram[(a, b)] += q[a] * q[b];
            }
            rhs[a] += q[a] * yj;
        }
    }
    let factor = SpdFactor::new(gram.as_ref())?;
    let beta_g = factor.solve_vec(&rhs);
    Ok(SieveRegressionModel { population_id, basis, beta_g, jitter: factor.jitter() })
}
