//! Gaussian kernels, bandwidth selection and per-population conditional mean embeddings.
//!
//! A fitted [`CmeModel`] stores the regularized inverse Gram matrix
//! `M = (K + λI)^{-1}` of one population's control covariates, so the embedding of
//! `Y(0) | X = x` is `Σ_u α_u(x) ℓ(Y_u, ·)` with `α(x) = M k(x)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::points::Points;

/// Default ridge regularizer for every population.
pub const DEFAULT_LAMBDA: f64 = 0.01;

/// Above this many points the multivariate median heuristic works on a strided subsample.
const MEDIAN_EXACT_CAP: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthRule {
    Fixed,
    MedianHeuristic,
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "median-heuristic" | "median_heuristic" | "median" => Ok(Self::MedianHeuristic),
            other => Err(Error::Config(format!("unknown bandwidth rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::MedianHeuristic => "median-heuristic",
        })
    }
}

/// Resolved kernel settings for one population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth_x: f64,
    pub bandwidth_y: f64,
    pub lambda: f64,
    pub bandwidth_rule: BandwidthRule,
}

impl KernelConfig {
    pub fn new(bandwidth_x: f64, bandwidth_y: f64, lambda: f64, bandwidth_rule: BandwidthRule) -> Result<Self> {
        for (name, v) in [("bandwidth_x", bandwidth_x), ("bandwidth_y", bandwidth_y), ("lambda", lambda)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        Ok(Self { bandwidth_x, bandwidth_y, lambda, bandwidth_rule })
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(self.bandwidth_x, self.bandwidth_y, lambda, self.bandwidth_rule)
    }
}

/// `exp(-‖u - v‖² / (2h²))`.
pub fn gaussian_kernel(u: &[f64], v: &[f64], h: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("kernel arguments of dimension {} and {}", u.len(), v.len())));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("kernel bandwidth must be positive, got {h}")));
    }
    Ok(gaussian(u, v, h))
}

#[inline]
fn gaussian(u: &[f64], v: &[f64], h: f64) -> f64 {
    let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * h * h)).exp()
}

/// Gram matrix `[k(a_u, b_v)]` of two point sets.
pub fn kernel_matrix(a: &Points, b: &Points, h: f64) -> Result<Mat<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("point sets of dimension {} and {}", a.dim(), b.dim())));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("kernel bandwidth must be positive, got {h}")));
    }
    if a.dim() == 1 {
        let xa = a.first_coordinate();
        let xb = b.first_coordinate();
        return Ok(scalar_kernel_matrix(&xa, &xb, h));
    }
    Ok(Mat::from_fn(a.len(), b.len(), |u, v| gaussian(a.row(u), b.row(v), h)))
}

fn scalar_kernel_matrix(a: &[f64], b: &[f64], h: f64) -> Mat<f64> {
    let scale = -1.0 / (2.0 * h * h);
    Mat::from_fn(a.len(), b.len(), |u, v| {
        let d = a[u] - b[v];
        (d * d * scale).exp()
    })
}

/// Median of the pairwise Euclidean distances over all unordered pairs.
///
/// One-dimensional inputs are handled exactly in `O(n log n)`; for larger dimensions the
/// exact computation is quadratic and runs on an evenly strided subsample once the input
/// exceeds 6000 points.
pub fn median_heuristic(points: &Points) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateData("median heuristic needs at least two points".into()));
    }
    let median = if points.dim() == 1 {
        let mut xs = points.first_coordinate();
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite point in median heuristic".into()));
        }
        xs.sort_by(f64::total_cmp);
        sorted_pairwise_median(&xs)
    } else {
        let sample: Vec<&[f64]> = if n > MEDIAN_EXACT_CAP {
            (0..MEDIAN_EXACT_CAP).map(|k| points.row(k * n / MEDIAN_EXACT_CAP)).collect()
        } else {
            points.iter().collect()
        };
        let mut dists = Vec::with_capacity(sample.len() * (sample.len() - 1) / 2);
        for i in 0..sample.len() {
            for j in i + 1..sample.len() {
                let sq: f64 = sample[i].iter().zip(sample[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                dists.push(sq.sqrt());
            }
        }
        median_in_place(&mut dists)
    };
    if median > 0.0 && median.is_finite() {
        Ok(median)
    } else {
        Err(Error::DegenerateData("median pairwise distance is zero (identical points)".into()))
    }
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let p = v.len();
    let upper = *v.select_nth_unstable_by(p / 2, f64::total_cmp).1;
    if p % 2 == 1 {
        upper
    } else {
        let lower = v[..p / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of `{xs[j] - xs[i] : i < j}` for sorted `xs`, without materializing the pairs.
fn sorted_pairwise_median(xs: &[f64]) -> f64 {
    let n = xs.len() as u64;
    let pairs = n * (n - 1) / 2;
    if pairs % 2 == 1 {
        kth_pairwise_difference(xs, pairs.div_ceil(2))
    } else {
        0.5 * (kth_pairwise_difference(xs, pairs / 2) + kth_pairwise_difference(xs, pairs / 2 + 1))
    }
}

/// Number of pairs `i < j` with `xs[j] - xs[i] <= t`.
fn count_within(xs: &[f64], t: f64) -> u64 {
    let mut count = 0u64;
    let mut j = 0usize;
    for i in 0..xs.len() {
        if j < i {
            j = i;
        }
        while j + 1 < xs.len() && xs[j + 1] - xs[i] <= t {
            j += 1;
        }
        count += (j - i) as u64;
    }
    count
}

/// The k-th smallest (1-based) pairwise difference, found by bisection on the bit pattern
/// of non-negative doubles, which is order preserving.
fn kth_pairwise_difference(xs: &[f64], k: u64) -> f64 {
    let max = xs[xs.len() - 1] - xs[0];
    let (mut lo, mut hi) = (0u64, max.to_bits());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if count_within(xs, f64::from_bits(mid)) >= k {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    f64::from_bits(lo)
}

/// Fitted conditional mean embedding of one population's control outcomes.
#[derive(Debug, Clone)]
pub struct CmeModel {
    pub population_id: usize,
    pub train_x: Points,
    pub train_y: Vec<f64>,
    /// `(K + λI)^{-1}`.
    pub m_inv: Mat<f64>,
    pub config: KernelConfig,
    /// Diagonal jitter that the factorization needed on top of λ.
    pub jitter: f64,
}

/// Fits `M = (K + λI)^{-1}` by a Cholesky factorization of the regularized Gram matrix.
pub fn fit_cme(population_id: usize, x: &Points, y: &[f64], config: KernelConfig) -> Result<CmeModel> {
    if x.is_empty() {
        return Err(Error::Input(format!("population {population_id} has no control observations")));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} covariate rows but {} outcomes", x.len(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite control outcome in population {population_id}")));
    }
    let mut k = kernel_matrix(x, x, config.bandwidth_x)?;
    for i in 0..k.nrows() {
        k[(i, i)] += config.lambda;
    }
    let factor = SpdFactor::new(k.as_ref())?;
    Ok(CmeModel {
        population_id,
        train_x: x.clone(),
        train_y: y.to_vec(),
        m_inv: factor.inverse(),
        config,
        jitter: factor.jitter(),
    })
}

impl CmeModel {
    pub fn n(&self) -> usize {
        self.train_y.len()
    }

    pub fn dim(&self) -> usize {
        self.train_x.dim()
    }

    /// `k(x) = (k(X_1, x), …, k(X_n, x))`.
    pub fn kernel_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query of dimension {} for a model trained on dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.train_x.iter().map(|row| gaussian(row, x, self.config.bandwidth_x)).collect())
    }

    /// `α(x) = M k(x)`, the weights of the embedding on the training outcomes.
    pub fn embedding_coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        let kx = self.kernel_vector(x)?;
        Ok(crate::linalg::mat_vec(self.m_inv.as_ref(), &kx))
    }

    /// Embedding coefficients for many query points at once, one column per point.
    pub fn embedding_matrix(&self, points: &Points) -> Result<Mat<f64>> {
        let kq = kernel_matrix(&self.train_x, points, self.config.bandwidth_x)?;
        let mut out = Mat::zeros(self.n(), points.len());
        matmul(out.as_mut(), Accum::Replace, self.m_inv.as_ref(), kq.as_ref(), 1.0, faer::get_global_parallelism());
        Ok(out)
    }
}

/// `[ℓ(Y_{i,u}, Y_{j,v})]`, the outcome-kernel Gram between two populations' control outcomes.
pub fn cross_outcome_gram(model_i: &CmeModel, model_j: &CmeModel) -> Result<Mat<f64>> {
    check_shared_outcome_bandwidth(model_i, model_j)?;
    Ok(scalar_kernel_matrix(&model_i.train_y, &model_j.train_y, model_i.config.bandwidth_y))
}

pub(crate) fn check_shared_outcome_bandwidth(a: &CmeModel, b: &CmeModel) -> Result<()> {
    let (ha, hb) = (a.config.bandwidth_y, b.config.bandwidth_y);
    if (ha - hb).abs() > 1e-12 * ha.abs().max(hb.abs()) {
        return Err(Error::Config(format!(
            "populations {} and {} use different outcome bandwidths ({ha} vs {hb})",
            a.population_id, b.population_id
        )));
    }
    Ok(())
}

/// Lazily computed outcome Grams keyed by ordered population pair.
#[derive(Default)]
pub struct OutcomeGramCache {
    grams: Mutex<HashMap<(usize, usize), Arc<Mat<f64>>>>,
}

impl OutcomeGramCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, model_i: &CmeModel, model_j: &CmeModel) -> Result<Arc<Mat<f64>>> {
        let key = (model_i.population_id, model_j.population_id);
        let mut grams = self.grams.lock().expect("gram cache poisoned");
        if let Some(g) = grams.get(&key) {
            return Ok(Arc::clone(g));
        }
        let gram = match grams.get(&(key.1, key.0)) {
            Some(t) => t.transpose().to_owned(),
            None => cross_outcome_gram(model_i, model_j)?,
        };
        let gram = Arc::new(gram);
        grams.insert(key, Arc::clone(&gram));
        Ok(gram)
    }

    pub fn len(&self) -> usize {
        self.grams.lock().expect("gram cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sequential matmul helper for callers that already parallelize at a coarser level.
pub(crate) fn matmul_into(dst: &mut Mat<f64>, lhs: faer::MatRef<'_, f64>, rhs: faer::MatRef<'_, f64>, par: Par) {
    matmul(dst.as_mut(), Accum::Replace, lhs, rhs, 1.0, par);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn config(lambda: f64) -> KernelConfig {
        KernelConfig::new(1.0, 1.0, lambda, BandwidthRule::Fixed).unwrap()
    }

    #[test]
    fn gaussian_kernel_closed_forms() {
        assert_eq!(gaussian_kernel(&[3.7], &[3.7], 2.0).unwrap(), 1.0);
        let v = (2.0 * 2f64.ln()).sqrt();
        assert!((gaussian_kernel(&[0.0], &[v], 1.0).unwrap() - 0.5).abs() < 1e-15);
        let k = gaussian_kernel(&[1.0, 2.0], &[2.0, 2.0], 1.0).unwrap();
        assert!((k - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn gaussian_kernel_errors() {
        assert!(matches!(gaussian_kernel(&[1.0], &[1.0, 2.0], 1.0), Err(Error::Shape(_))));
        assert!(matches!(gaussian_kernel(&[1.0], &[1.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(gaussian_kernel(&[1.0], &[1.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_config_rejects_nonpositive() {
        assert!(KernelConfig::new(0.0, 1.0, 0.01, BandwidthRule::Fixed).is_err());
        assert!(KernelConfig::new(1.0, -1.0, 0.01, BandwidthRule::Fixed).is_err());
        assert!(KernelConfig::new(1.0, 1.0, 0.0, BandwidthRule::Fixed).is_err());
    }

    #[test]
    fn median_heuristic_small_cases() {
        assert_eq!(median_heuristic(&Points::from_scalars(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(median_heuristic(&Points::from_scalars(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
        // four points: distances 1,2,3,1,2,1 -> sorted 1,1,1,2,2,3 -> median 1.5
        assert_eq!(median_heuristic(&Points::from_scalars(&[0.0, 1.0, 2.0, 3.0])).unwrap(), 1.5);
        let two_d = Points::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(median_heuristic(&two_d).unwrap(), 5.0);
    }

    #[test]
    fn median_heuristic_degenerate() {
        assert!(matches!(
            median_heuristic(&Points::from_scalars(&[2.0, 2.0, 2.0])),
            Err(Error::DegenerateData(_))
        ));
        assert!(median_heuristic(&Points::from_scalars(&[2.0])).is_err());
    }

    #[test]
    fn median_heuristic_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [100usize, 101] {
            let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut pairs = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((xs[i] - xs[j]).abs());
                }
            }
            pairs.sort_by(f64::total_cmp);
            let p = pairs.len();
            let brute = if p % 2 == 1 { pairs[p / 2] } else { 0.5 * (pairs[p / 2 - 1] + pairs[p / 2]) };
            let fast = median_heuristic(&Points::from_scalars(&xs)).unwrap();
            assert_eq!(fast, brute, "n = {n}");
            // same values through the multivariate path
            let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v, 0.0]).collect();
            let slow = median_heuristic(&Points::from_rows(&rows).unwrap()).unwrap();
            assert_eq!(slow, brute);
        }
    }

    #[test]
    fn fit_cme_single_point() {
        let m = fit_cme(1, &Points::from_scalars(&[0.3]), &[2.0], config(0.01)).unwrap();
        assert!((m.m_inv[(0, 0)] - 1.0 / 1.01).abs() < 1e-15);
        let a = m.embedding_coefficients(&[0.3]).unwrap();
        assert!((a[0] - 1.0 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn fit_cme_duplicate_covariates_two_by_two() {
        let lambda = 0.01;
        let m = fit_cme(1, &Points::from_scalars(&[0.5, 0.5]), &[1.0, 2.0], config(lambda)).unwrap();
        // [[1+λ, 1], [1, 1+λ]]^{-1} = 1/((1+λ)^2 - 1) [[1+λ, -1], [-1, 1+λ]]
        let det = (1.0 + lambda) * (1.0 + lambda) - 1.0;
        let expected = [[(1.0 + lambda) / det, -1.0 / det], [-1.0 / det, (1.0 + lambda) / det]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.m_inv[(i, j)] - expected[i][j]).abs() < 1e-9 * expected[i][j].abs());
            }
        }
    }

    #[test]
    fn huge_lambda_shrinks_inverse() {
        let xs = Points::from_scalars(&[0.0, 0.4, 1.3, 2.0]);
        let lambda = 1e6;
        let m = fit_cme(1, &xs, &[0.0; 4], config(lambda)).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                assert!(m.m_inv[(i, j)].abs() <= 2.0 / lambda);
            }
        }
    }

    #[test]
    fn far_query_gives_vanishing_coefficients() {
        let xs = Points::from_scalars(&[0.0, 0.5, 1.0]);
        let m = fit_cme(1, &xs, &[0.0, 1.0, 2.0], config(0.01)).unwrap();
        let a = m.embedding_coefficients(&[1e3]).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-300));
        assert!(matches!(m.embedding_coefficients(&[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn m_inv_inverts_regularized_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..3.0)).collect();
        let pts = Points::from_scalars(&xs);
        let cfg = config(0.01);
        let m = fit_cme(1, &pts, &xs, cfg).unwrap();
        let mut k = kernel_matrix(&pts, &pts, 1.0).unwrap();
        let ev = symmetric_eigenvalues(k.as_ref()).unwrap();
        assert!(ev[0] >= -1e-9 * ev[ev.len() - 1]);
        for i in 0..k.nrows() {
            k[(i, i)] += 0.01;
        }
        let prod = &m.m_inv * &k;
        for i in 0..prod.nrows() {
            for j in 0..prod.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - target).abs() < 1e-8);
            }
        }
        assert!(crate::linalg::max_abs_asymmetry(m.m_inv.as_ref()) == 0.0);
    }

    #[test]
    fn embedding_matches_independent_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..3.0)).collect();
        let pts = Points::from_scalars(&xs);
        let m = fit_cme(2, &pts, &xs, config(0.01)).unwrap();
        let q = 0.77;
        let alpha = m.embedding_coefficients(&[q]).unwrap();
        // Gaussian elimination on (K + λI) α = k(q), written out independently.
        let n = xs.len();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| (-(xs[i] - xs[j]).powi(2) / 2.0).exp() + if i == j { 0.01 } else { 0.0 })
                    .collect();
                row.push((-(xs[i] - q).powi(2) / 2.0).exp());
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
            aug.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    for k in c..=n {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        for i in 0..n {
            let expected = aug[i][n] / aug[i][i];
            assert!((alpha[i] - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }
        let batch = m.embedding_matrix(&Points::from_scalars(&[q])).unwrap();
        for i in 0..n {
            assert!((batch[(i, 0)] - alpha[i]).abs() < 1e-12 * (1.0 + alpha[i].abs()));
        }
    }

    #[test]
    fn embedding_is_lipschitz_in_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..3.0)).collect();
        let m = fit_cme(1, &Points::from_scalars(&xs), &xs, config(0.01)).unwrap();
        for _ in 0..3 {
            let q: f64 = rng.random_range(-1.0..3.0);
            let base = m.embedding_coefficients(&[q]).unwrap();
            let mut ratios = Vec::new();
            for delta in [1e-3, 1e-4, 1e-5] {
                let moved = m.embedding_coefficients(&[q + delta]).unwrap();
                let change = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                ratios.push(change / delta);
            }
            // O(δ): the difference quotient settles rather than blowing up
            assert!(ratios[2] <= 1.01 * ratios[1] + 1e-6 && ratios[1] <= 1.1 * ratios[0] + 1e-6, "{ratios:?}");
        }
    }

    #[test]
    fn cross_gram_properties() {
        let cfg = config(0.01);
        let a = fit_cme(1, &Points::from_scalars(&[0.0, 1.0, 2.0]), &[0.1, -0.4, 2.0], cfg).unwrap();
        let b = fit_cme(2, &Points::from_scalars(&[0.5, 1.5]), &[1.0, 3.0], cfg).unwrap();
        let self_gram = cross_outcome_gram(&a, &a).unwrap();
        for i in 0..3 {
            assert_eq!(self_gram[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(self_gram[(i, j)], self_gram[(j, i)]);
            }
        }
        let ab = cross_outcome_gram(&a, &b).unwrap();
        assert_eq!((ab.nrows(), ab.ncols()), (3, 2));
        for u in 0..3 {
            for v in 0..2 {
                let direct = gaussian_kernel(&[a.train_y[u]], &[b.train_y[v]], 1.0).unwrap();
                assert_eq!(ab[(u, v)], direct);
            }
        }
        let cache = OutcomeGramCache::new();
        let ba = cache.get(&b, &a).unwrap();
        let ab2 = cache.get(&a, &b).unwrap();
        assert_eq!(cache.len(), 2);
        for u in 0..3 {
            for v in 0..2 {
                assert_eq!(ab2[(u, v)], ba[(v, u)]);
                assert_eq!(ab2[(u, v)], ab[(u, v)]);
            }
        }
    }

    #[test]
    fn cross_gram_far_supports_vanish_and_mismatch_errors() {
        let cfg = config(0.01);
        let a = fit_cme(1, &Points::from_scalars(&[0.0, 1.0]), &[0.0, 0.5], cfg).unwrap();
        let b = fit_cme(2, &Points::from_scalars(&[0.0, 1.0]), &[1e4, 1e4 + 1.0], cfg).unwrap();
        let g = cross_outcome_gram(&a, &b).unwrap();
        assert!((0..2).all(|u| (0..2).all(|v| g[(u, v)] < 1e-300)));
        let other = fit_cme(3, &Points::from_scalars(&[0.0]), &[0.0], KernelConfig { bandwidth_y: 2.0, ..cfg }).unwrap();
        assert!(matches!(cross_outcome_gram(&a, &other), Err(Error::Config(_))));
    }
}
